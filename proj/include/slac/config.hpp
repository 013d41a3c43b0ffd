#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "slac/experiments.hpp"

namespace slac {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

namespace detail {

/// Strict view of one JSON object: every key must be declared, and errors
/// carry the dotted path of the offending entry.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> known(keys.begin(), keys.end());
        for (const auto& [k, v] : j_.items())
            if (!known.count(k)) throw ConfigError(key(k), "unknown key");
    }

    bool has(const char* k) const { return j_.contains(k); }
    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    const Json& at(const char* k) const {
        if (!j_.contains(k)) throw ConfigError(key(k), "missing required key");
        return j_.at(k);
    }
    Section sub(const char* k) const { return Section(at(k), key(k)); }

    double number(const char* k) const {
        const Json& v = at(k);
        if (!v.is_number()) throw ConfigError(key(k), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(key(k), "must be finite");
        return d;
    }
    double number(const char* k, double lo, double hi) const {
        const double d = number(k);
        if (d < lo || d > hi) throw ConfigError(key(k), "out of range");
        return d;
    }
    long long integer(const char* k, long long lo, long long hi) const {
        const Json& v = at(k);
        if (!v.is_number_integer()) throw ConfigError(key(k), "expected an integer");
        const auto i = v.get<long long>();
        if (i < lo || i > hi) throw ConfigError(key(k), "out of range");
        return i;
    }
    bool boolean(const char* k) const {
        const Json& v = at(k);
        if (!v.is_boolean()) throw ConfigError(key(k), "expected true or false");
        return v.get<bool>();
    }
    std::string string(const char* k) const {
        const Json& v = at(k);
        if (!v.is_string()) throw ConfigError(key(k), "expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const char* k) const {
        const Json& v = at(k);
        if (!v.is_array() || v.empty()) throw ConfigError(key(k), "expected a non-empty list of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(key(k), "expected a non-empty list of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<int> integers(const Json& v, const std::string& name, int lo, int hi) const {
        if (!v.is_array() || v.empty()) throw ConfigError(name, "expected a non-empty list of integers");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) throw ConfigError(name, "expected a non-empty list of integers");
            const auto i = e.get<long long>();
            if (i < lo || i > hi) throw ConfigError(name, "value out of range");
            out.push_back(int(i));
        }
        return out;
    }
    Vec3 point(const char* k) const {
        const auto v = numbers(k);
        if (v.size() != 3) throw ConfigError(key(k), "expected [x, y, z]");
        return {v[0], v[1], v[2]};
    }

private:
    const Json& j_;
    std::string path_;
};

inline ArrayConfig parse_array(const Section& s) {
    s.allow({"kind", "counts", "spacing_m", "position"});
    ArrayConfig a;
    const std::string kind = s.string("kind");
    if (kind == "ULA")
        a.kind = ArrayKind::ULA;
    else if (kind == "UPA")
        a.kind = ArrayKind::UPA;
    else
        throw ConfigError(s.key("kind"), "expected ULA or UPA");
    const auto counts = s.integers(s.at("counts"), s.key("counts"), 1, 4096);
    if (a.kind == ArrayKind::ULA && counts.size() != 1) throw ConfigError(s.key("counts"), "ULA takes [N]");
    if (a.kind == ArrayKind::UPA && counts.size() != 2) throw ConfigError(s.key("counts"), "UPA takes [N_x, N_z]");
    a.nx = counts[0];
    a.nz = counts.size() == 2 ? counts[1] : 1;
    if (s.has("spacing_m")) {
        a.spacing = s.number("spacing_m");
        if (!(*a.spacing > 0.0)) throw ConfigError(s.key("spacing_m"), "must be positive");
    }
    if (s.has("position")) a.position = s.point("position");
    return a;
}

inline void parse_system(const Section& s, double& carrier, std::vector<double>* snr) {
    s.allow({"carrier_hz", "snr_db", "noise_convention"});
    carrier = s.number("carrier_hz", 1e6, 1e13);
    if (snr) *snr = s.numbers("snr_db");
    if (s.has("noise_convention") && s.string("noise_convention") != "per_sample")
        throw ConfigError(s.key("noise_convention"), "only per_sample is supported");
}

inline FrameConfig parse_frame(const Section& s, std::map<EstimatorKind, std::vector<int>>* per_estimator) {
    s.allow({"t_c", "t_p", "trials", "seed"});
    FrameConfig f;
    f.t_c = int(s.integer("t_c", 1, 1000000));
    const Json& tp = s.at("t_p");
    if (tp.is_object() && per_estimator) {
        for (const auto& [name, list] : tp.items()) {
            const auto kind = parse_estimator(name);
            if (!kind) throw ConfigError(s.key("t_p") + "." + name, "unknown estimator");
            (*per_estimator)[*kind] = s.integers(list, s.key("t_p") + "." + name, 0, f.t_c);
        }
    } else {
        f.t_p = s.integers(tp, s.key("t_p"), 0, f.t_c);
    }
    f.trials = int(s.integer("trials", 1, 100000000));
    f.seed = std::uint64_t(s.integer("seed", 0, std::numeric_limits<long long>::max()));
    return f;
}

}  // namespace detail

inline Json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
    }
}

inline void check_root(const Json& j) {
    detail::Section root(j, "");
    root.allow({"system", "arrays", "channel", "frame", "estimators", "tradeoff"});
}

/// Channel-estimation benchmark settings from a config document.
inline CeBenchConfig parse_cebench_config(const Json& j) {
    check_root(j);
    const detail::Section root(j, "");
    CeBenchConfig c;
    detail::parse_system(root.sub("system"), c.carrier_hz, &c.snr_db);

    const auto arrays = root.sub("arrays");
    arrays.allow({"bs", "ms", "ris"});
    c.bs = detail::parse_array(arrays.sub("bs"));
    c.ms = detail::parse_array(arrays.sub("ms"));
    c.ris = detail::parse_array(arrays.sub("ris"));

    const auto channel = root.sub("channel");
    channel.allow({"direct_paths", "blocked_los"});
    c.direct_paths = int(channel.integer("direct_paths", 0, 64));
    c.blocked_los = channel.boolean("blocked_los");

    c.frame = detail::parse_frame(root.sub("frame"), &c.t_p_override);

    const auto est = root.sub("estimators");
    est.allow({"enabled", "codebook_oversampling", "sparse", "unfold"});
    const Json& enabled = est.at("enabled");
    if (!enabled.is_array() || enabled.empty())
        throw ConfigError(est.key("enabled"), "expected a non-empty list of estimator names");
    for (const auto& e : enabled) {
        const auto kind = e.is_string() ? parse_estimator(e.get<std::string>()) : std::nullopt;
        if (!kind) throw ConfigError(est.key("enabled"), "unknown estimator " + e.dump());
        c.estimators.push_back(*kind);
    }
    for (const auto& [kind, list] : c.t_p_override)
        if (std::find(c.estimators.begin(), c.estimators.end(), kind) == c.estimators.end())
            throw ConfigError("frame.t_p." + std::string(estimator_name(kind)), "estimator is not enabled");
    for (auto kind : c.estimators) {
        if (kind == EstimatorKind::FullCsi) continue;
        const auto b = c.budgets(kind);
        if (b.empty()) throw ConfigError("frame.t_p", std::string("no pilot budget for ") + estimator_name(kind));
        for (int t : b)
            if (t < 1) throw ConfigError("frame.t_p", std::string(estimator_name(kind)) + " needs T_p >= 1");
    }
    if (est.has("codebook_oversampling")) c.codebook_oversampling = int(est.integer("codebook_oversampling", 1, 16));
    if (est.has("sparse")) {
        const auto sp = est.sub("sparse");
        sp.allow({"max_paths"});
        c.sparse_max_paths = int(sp.integer("max_paths", 1, 64));
    }
    if (est.has("unfold")) {
        const auto u = est.sub("unfold");
        u.allow({"depth", "train"});
        c.unfold.depth = int(u.integer("depth", 1, 1000));
        if (u.has("train")) {
            const auto t = u.sub("train");
            t.allow({"samples", "epochs", "lr"});
            c.unfold.samples = int(t.integer("samples", 1, 1000000));
            c.unfold.epochs = int(t.integer("epochs", 0, 100000));
            c.unfold.learning_rate = t.number("lr");
            if (!(c.unfold.learning_rate > 0.0)) throw ConfigError(t.key("lr"), "must be positive");
        }
    }

    const bool needs_ula = std::any_of(c.estimators.begin(), c.estimators.end(), [](EstimatorKind k) {
        return k == EstimatorKind::Sparse || k == EstimatorKind::BeamAlign;
    });
    if (needs_ula) {
        for (auto [name, a] : {std::pair{"arrays.bs", c.bs}, {"arrays.ms", c.ms}, {"arrays.ris", c.ris}}) {
            if (a.kind != ArrayKind::ULA) throw ConfigError(name, "sparse and beam_align need ULAs");
            if (a.spacing) throw ConfigError(std::string(name) + ".spacing_m", "sparse and beam_align need half-wavelength spacing");
        }
    }
    return c;
}

/// PEB/SE tradeoff settings from a config document.
inline TradeoffConfig parse_tradeoff_config(const Json& j) {
    check_root(j);
    const detail::Section root(j, "");
    TradeoffConfig c;
    detail::parse_system(root.sub("system"), c.carrier_hz, nullptr);
    c.frame = detail::parse_frame(root.sub("frame"), nullptr);
    if (c.frame.t_p.front() < 1) throw ConfigError("frame.t_p", "tradeoff needs T_p >= 1");
    if (!std::is_sorted(c.frame.t_p.begin(), c.frame.t_p.end()))
        throw ConfigError("frame.t_p", "must be ascending");

    const auto t = root.sub("tradeoff");
    t.allow({"policies", "prior_sigma_m", "dither_rad", "uncertainty_radius_m", "ris_sizes", "element_snr_db",
             "pilot_subcarriers", "bs_position", "ris_position", "user_position"});
    const Json& pol = t.at("policies");
    if (!pol.is_array() || pol.empty()) throw ConfigError(t.key("policies"), "expected a non-empty list");
    c.policies.clear();
    for (const auto& p : pol) {
        const std::string name = p.is_string() ? p.get<std::string>() : "";
        if (name == "random")
            c.policies.push_back(PolicyKind::Random);
        else if (name == "directional")
            c.policies.push_back(PolicyKind::Directional);
        else
            throw ConfigError(t.key("policies"), "expected random or directional, got " + p.dump());
    }
    const bool directional =
        std::find(c.policies.begin(), c.policies.end(), PolicyKind::Directional) != c.policies.end();
    if (t.has("prior_sigma_m")) c.prior_sigma_m = t.number("prior_sigma_m", 0.0, 1e6);
    else if (directional) throw ConfigError(t.key("prior_sigma_m"), "required by the directional policy");
    if (t.has("dither_rad")) c.dither_rad = t.number("dither_rad", 0.0, 2 * std::numbers::pi);
    if (t.has("uncertainty_radius_m")) c.uncertainty_radius_m = t.number("uncertainty_radius_m", 0.0, 1e6);
    if (t.has("element_snr_db")) c.element_snr_db = t.number("element_snr_db", -200.0, 200.0);
    if (t.has("pilot_subcarriers")) c.pilot_subcarriers = int(t.integer("pilot_subcarriers", 1, 1000000));
    if (t.has("ris_sizes")) {
        const Json& rs = t.at("ris_sizes");
        if (!rs.is_array() || rs.empty()) throw ConfigError(t.key("ris_sizes"), "expected a list of [N_x, N_z]");
        c.ris_sizes.clear();
        for (const auto& e : rs) {
            const auto v = t.integers(e, t.key("ris_sizes"), 1, 4096);
            if (v.size() != 2) throw ConfigError(t.key("ris_sizes"), "expected a list of [N_x, N_z]");
            c.ris_sizes.emplace_back(v[0], v[1]);
        }
    }
    if (t.has("bs_position")) c.bs_position = t.point("bs_position");
    if (t.has("ris_position")) c.ris_position = t.point("ris_position");
    if (t.has("user_position")) c.user_position = t.point("user_position");
    return c;
}

/// Shortest decimal form that reads back to the same double; `inf` for
/// infinity.
inline std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline void write_cebench_csv(std::ostream& os, const std::vector<CeBenchRow>& rows) {
    os << "estimator,t_p,snr_db,nmse,eff_se_bits\n";
    for (const auto& r : rows)
        os << r.estimator << ',' << r.t_p << ',' << format_number(r.snr_db) << ',' << format_number(r.nmse) << ','
           << format_number(r.eff_se) << '\n';
}

inline void write_tradeoff_csv(std::ostream& os, const std::vector<TradeoffPoint>& points) {
    os << "ris_elems,policy,t_p,peb_m,eff_se_bits\n";
    for (const auto& p : points)
        os << p.ris_elements << ',' << policy_name(p.policy) << ',' << p.t_p << ',' << format_number(p.peb) << ','
           << format_number(p.eff_se) << '\n';
}

/// Run metadata: the effective config (after command-line overrides), seed,
/// schema version and conventions. Contains no timestamps.
inline Json run_metadata(const std::string& command, const Json& effective_config, std::uint64_t seed) {
    Json m;
    m["command"] = command;
    m["schema_version"] = kSchemaVersion;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["config"] = effective_config;
    m["conventions"] = {
        {"noise", "per_sample: noise variance 10^(-snr_db/10) per complex receive sample, unit-gain paths"},
        {"steering", "exp(+j k <d, r_m - ref>), d pointing from the array toward the far point"},
        {"near_field", "exp(-j k (|s - r_m| - |s - ref|))"},
        {"cascade", "column m = vec(G[:, m] F[m, :]), column-major"},
        {"training_profiles",
         "directional pilots: per-slot focus uniform in a ball of uncertainty_radius_m around the prior, "
         "plus uniform phase dither of +-dither_rad"},
        {"seeds", "splitmix64 hash of (root seed, cell coordinates)"}};
    return m;
}

}  // namespace slac
