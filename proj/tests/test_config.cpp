#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "slac/config.hpp"

using namespace slac;

namespace {

Json cebench_doc() {
    return Json::parse(R"({
      "system": {"carrier_hz": 28e9, "snr_db": [0, 10], "noise_convention": "per_sample"},
      "arrays": {"bs": {"kind": "ULA", "counts": [4]},
                 "ms": {"kind": "ULA", "counts": [4]},
                 "ris": {"kind": "ULA", "counts": [8]}},
      "channel": {"direct_paths": 2, "blocked_los": false},
      "frame": {"t_c": 500, "t_p": {"ls": [32], "beam_align": [40, 56]}, "trials": 10, "seed": 7},
      "estimators": {"enabled": ["full_csi", "ls", "beam_align"], "codebook_oversampling": 2,
                     "unfold": {"depth": 4, "train": {"samples": 20, "epochs": 3, "lr": 0.05}}}
    })");
}

Json tradeoff_doc() {
    return Json::parse(R"({
      "system": {"carrier_hz": 30e9},
      "frame": {"t_c": 1000, "t_p": [4, 100, 1000], "trials": 5, "seed": 1},
      "tradeoff": {"policies": ["random", "directional"], "prior_sigma_m": 0.5, "dither_rad": 0.2,
                   "ris_sizes": [[16, 16]], "element_snr_db": -30, "pilot_subcarriers": 4,
                   "uncertainty_radius_m": 2.0, "user_position": [4, 5, -6]}
    })");
}

std::string error_key(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

}  // namespace

TEST(CeBenchConfig, ParsesAllSections) {
    const auto c = parse_cebench_config(cebench_doc());
    EXPECT_EQ(c.carrier_hz, 28e9);
    EXPECT_EQ(c.snr_db, (std::vector<double>{0, 10}));
    EXPECT_EQ(c.ris.nx, 8);
    EXPECT_EQ(c.direct_paths, 2);
    EXPECT_FALSE(c.blocked_los);
    EXPECT_EQ(c.frame.seed, 7u);
    EXPECT_EQ(c.budgets(EstimatorKind::BeamAlign), (std::vector<int>{40, 56}));
    EXPECT_EQ(c.budgets(EstimatorKind::FullCsi), (std::vector<int>{0}));
    EXPECT_EQ(c.codebook_oversampling, 2);
    EXPECT_EQ(c.unfold.depth, 4);
    EXPECT_EQ(c.unfold.samples, 20);
    EXPECT_DOUBLE_EQ(c.unfold.learning_rate, 0.05);
}

TEST(CeBenchConfig, NamesOffendingKey) {
    auto j = cebench_doc();
    j["arrays"]["ms"]["countz"] = 3;
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "arrays.ms.countz");

    j = cebench_doc();
    j["estimators"]["enabled"].push_back("anm");
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "estimators.enabled");

    j = cebench_doc();
    j["frame"]["t_p"]["sparse"] = {10};
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "frame.t_p.sparse");

    j = cebench_doc();
    j["frame"]["trials"] = 0;
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "frame.trials");

    j = cebench_doc();
    j["system"]["noise_convention"] = "post_combining";
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "system.noise_convention");

    j = cebench_doc();
    j["extra"] = 1;
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "extra");

    j = cebench_doc();
    j["arrays"]["ris"] = Json::parse(R"({"kind": "UPA", "counts": [4, 4]})");
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "arrays.ris");

    j = cebench_doc();
    j["system"].erase("carrier_hz");
    EXPECT_EQ(error_key([&] { parse_cebench_config(j); }), "system.carrier_hz");
}

TEST(TradeoffConfig, Parses) {
    const auto c = parse_tradeoff_config(tradeoff_doc());
    EXPECT_EQ(c.policies.size(), 2u);
    EXPECT_EQ(*c.prior_sigma_m, 0.5);
    EXPECT_EQ(c.dither_rad, 0.2);
    EXPECT_EQ(c.ris_sizes, (std::vector<std::pair<int, int>>{{16, 16}}));
    EXPECT_EQ(c.element_snr_db, -30);
    EXPECT_EQ(c.pilot_subcarriers, 4);
    EXPECT_EQ(c.uncertainty_radius_m, 2.0);
    EXPECT_TRUE(c.user_position.isApprox(Vec3(4, 5, -6)));
    EXPECT_EQ(c.frame.t_p, (std::vector<int>{4, 100, 1000}));
}

TEST(TradeoffConfig, DirectionalNeedsPrior) {
    auto j = tradeoff_doc();
    j["tradeoff"].erase("prior_sigma_m");
    EXPECT_EQ(error_key([&] { parse_tradeoff_config(j); }), "tradeoff.prior_sigma_m");
    j["tradeoff"]["policies"] = {"random"};
    EXPECT_NO_THROW(parse_tradeoff_config(j));
}

TEST(TradeoffConfig, RejectsBadPilotLists) {
    auto j = tradeoff_doc();
    j["frame"]["t_p"] = {100, 4};
    EXPECT_EQ(error_key([&] { parse_tradeoff_config(j); }), "frame.t_p");
    j["frame"]["t_p"] = {0, 4};
    EXPECT_EQ(error_key([&] { parse_tradeoff_config(j); }), "frame.t_p");
    j["frame"]["t_p"] = {4, 2000};
    EXPECT_EQ(error_key([&] { parse_tradeoff_config(j); }), "frame.t_p");
}

TEST(LoadJson, Errors) {
    EXPECT_THROW(load_json("/nonexistent/config.json"), IoError);
    const auto path = std::filesystem::temp_directory_path() / "slac_bad_config.json";
    {
        std::ofstream os(path);
        os << "{ not json";
    }
    EXPECT_THROW(load_json(path.string()), ConfigError);
    std::filesystem::remove(path);
}

TEST(FormatNumber, RoundTripAndSpecials) {
    for (double v : {0.1, 1.0 / 3.0, 13.711, 1e-300, -2.5e17}) EXPECT_EQ(std::stod(format_number(v)), v);
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_number(2.0), "2");
}

TEST(Csv, Headers) {
    std::ostringstream a, b;
    write_cebench_csv(a, {{"ls", 32, 0.0, 1.75, 3.5}});
    EXPECT_EQ(a.str(), "estimator,t_p,snr_db,nmse,eff_se_bits\nls,32,0,1.75,3.5\n");
    write_tradeoff_csv(b, {{4, std::numeric_limits<double>::infinity(), 0.25, PolicyKind::Random, 256}});
    EXPECT_EQ(b.str(), "ris_elems,policy,t_p,peb_m,eff_se_bits\n256,random,4,inf,0.25\n");
}

TEST(Metadata, EchoesConfigAndSeed) {
    const auto m = run_metadata("tradeoff", tradeoff_doc(), 42);
    EXPECT_EQ(m["seed"], 42);
    EXPECT_EQ(m["schema_version"], kSchemaVersion);
    EXPECT_EQ(m["config"], tradeoff_doc());
    EXPECT_TRUE(m.contains("conventions"));
    EXPECT_EQ(parse_tradeoff_config(m["config"]).frame.seed, 1u);
}
