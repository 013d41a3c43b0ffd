#include <cmath>
#include <numbers>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "slac/channel.hpp"

using namespace slac;
using std::numbers::pi;

namespace {

const Wavelength kWl = Wavelength::from_lambda(0.01);

ChannelMatrices random_matrices(std::uint64_t seed, int n_ms, int n_bs, int n_ris) {
    Rng rng(seed);
    auto fill = [&](int r, int c) {
        CMat m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = complex_normal(rng, 1.0);
        return m;
    };
    return {fill(n_ms, n_bs), fill(n_ris, n_bs), fill(n_ms, n_ris)};
}

PilotSlot identity_slot(int n_ris, int n_bs, int n_ms) {
    PilotSlot s;
    s.profile = RisProfile::absorbing(n_ris);
    s.precoder = CVec::Zero(n_bs);
    s.precoder[0] = 1.0;
    s.combiner = CMat::Identity(n_ms, n_ms);
    return s;
}

}  // namespace

TEST(EffectiveMatrix, AbsorbingRisLeavesDirect) {
    const auto ch = random_matrices(1, 3, 2, 5);
    EXPECT_LT((effective_matrix(ch, RisProfile::absorbing(5)) - ch.direct).norm(), 1e-14);
}

TEST(EffectiveMatrix, SingleElementProduct) {
    const auto ula_bs = ArraySpec::ula(3, kWl.lambda / 2), ula_ms = ArraySpec::ula(2, kWl.lambda / 2);
    const auto one = ArraySpec::ula(1, kWl.lambda / 2);
    PathParams pf{std::polar(1.0, 0.3), Direction(0.2, 0.0), Direction(-0.7, 0.1), 0.0};
    PathParams pg{std::polar(1.0, -1.1), Direction(1.3, -0.2), Direction(0.4, 0.0), 0.0};
    EffectiveChannel ch{std::nullopt, {ula_bs, one, kWl, {pf}}, {one, ula_ms, kWl, {pg}}};
    const double psi = 0.8;
    CVec w(1);
    w[0] = std::polar(1.0, psi);
    const CMat h = effective_matrix(ch, RisProfile(w));
    const CMat expected = std::polar(1.0, psi) * pg.gain * pf.gain * steering_vector(ula_ms, pg.aoa, kWl) *
                          steering_vector(ula_bs, pf.aod, kWl).adjoint();
    EXPECT_LT((h - expected).norm(), 1e-12);
}

TEST(EffectiveMatrix, MatchesTripleLoop) {
    const auto ch = random_matrices(2, 4, 4, 8);
    const auto p = random_profile(8, 3);
    const CMat h = effective_matrix(ch, p);
    for (int n = 0; n < 4; ++n)
        for (int k = 0; k < 4; ++k) {
            cplx acc = ch.direct(n, k);
            for (int m = 0; m < 8; ++m) acc += ch.ris_ms(n, m) * p[m] * ch.bs_ris(m, k);
            EXPECT_LT(std::abs(h(n, k) - acc), 1e-12);
        }
}

TEST(EffectiveMatrix, DimensionMismatch) {
    const auto ch = random_matrices(2, 4, 4, 8);
    EXPECT_THROW(effective_matrix(ch, random_profile(7, 1)), DimensionMismatch);
}

TEST(EffectiveMatrix, LinearInProfile) {
    const auto ch = random_matrices(3, 3, 2, 6);
    Rng rng(4);
    CVec w1(6), w2(6);
    for (int m = 0; m < 6; ++m) {
        w1[m] = complex_normal(rng, 1.0);
        w2[m] = complex_normal(rng, 1.0);
    }
    const cplx a(0.3, -1.2), b(-0.7, 0.4);
    const CMat lhs = effective_matrix(ch, CVec(a * w1 + b * w2)) - ch.direct;
    const CMat rhs = a * (effective_matrix(ch, w1) - ch.direct) + b * (effective_matrix(ch, w2) - ch.direct);
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(EffectiveMatrix, CommonPhaseInvariance) {
    auto ch = random_matrices(5, 3, 3, 7);
    ch.direct.setZero();
    const auto p = random_profile(7, 6);
    const CVec rotated = std::polar(1.0, 1.234) * p.coefficients();
    EXPECT_NEAR(effective_matrix(ch, p).norm(), effective_matrix(ch, rotated).norm(), 1e-12);
}

TEST(GeometricChannel, RankAndOrthogonalNorm) {
    const auto bs = ArraySpec::ula(8, kWl.lambda / 2), ms = ArraySpec::ula(8, kWl.lambda / 2);
    const auto g = random_channel(9, bs, ms, 2, true, kWl);
    Eigen::JacobiSVD<CMat> svd(g.matrix());
    const auto sv = svd.singularValues();
    EXPECT_LT(sv[3], 1e-9 * sv[0]);

    // DFT-orthogonal angle pairs: spatial frequencies 0 and 0.5 on an 8-element ULA
    const double az2 = std::acos(0.5);
    GeometricChannel orth{bs, ms, kWl,
                          {{cplx(1.0), Direction(pi / 2, 0.0), Direction(pi / 2, 0.0), 0.0},
                           {std::polar(1.0, 0.7), Direction(az2, 0.0), Direction(az2, 0.0), 0.0}}};
    EXPECT_NEAR(orth.matrix().squaredNorm(), 2.0 * 64, 1e-9);
}

TEST(RandomChannel, ZeroPathsIsZero) {
    const auto a = ArraySpec::ula(4, kWl.lambda / 2);
    EXPECT_EQ(random_channel(1, a, a, 0, false, kWl).matrix().norm(), 0.0);
    EXPECT_THROW(random_channel(1, a, a, -1, false, kWl), InvalidArgument);
}

TEST(RandomChannel, Deterministic) {
    const auto a = ArraySpec::ula(4, kWl.lambda / 2), b = ArraySpec::upa(2, 3, kWl.lambda / 2);
    EXPECT_EQ(random_channel(5, a, b, 2, true, kWl).matrix(), random_channel(5, a, b, 2, true, kWl).matrix());
}

TEST(RandomChannel, MeanFrobeniusNorm) {
    const auto a = ArraySpec::ula(16, kWl.lambda / 2);
    double acc = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) acc += random_channel(std::uint64_t(i), a, a, 1, false, kWl).matrix().squaredNorm();
    EXPECT_NEAR(acc / draws, 256.0, 0.02 * 256.0);
}

TEST(ReceivePilots, NoiselessEqualsMean) {
    const auto ch = random_matrices(6, 3, 2, 4);
    PilotSlot s;
    s.profile = random_profile(4, 1);
    s.precoder = CVec::Ones(2) / std::sqrt(2.0);
    s.combiner = CMat::Identity(3, 3);
    s.pilot = std::polar(1.0, 0.5);
    const auto y = receive_pilots(ch, {s}, NoiseModel{0.0}, 3);
    const CVec expected = effective_matrix(ch, s.profile) * s.precoder * s.pilot;
    EXPECT_EQ((y[0] - expected).norm(), 0.0);
}

TEST(ReceivePilots, ScalarChannel) {
    ChannelMatrices ch{CMat::Constant(1, 1, 2.0), CMat::Zero(1, 1), CMat::Zero(1, 1)};
    PilotSlot s = identity_slot(1, 1, 1);
    const auto y = receive_pilots(ch, {s}, NoiseModel{0.0}, 1);
    EXPECT_EQ(y[0][0], cplx(2.0));
}

TEST(ReceivePilots, PureNoiseVariance) {
    ChannelMatrices ch{CMat::Zero(2, 1), CMat::Zero(1, 1), CMat::Zero(2, 1)};
    const double var = 0.37;
    std::vector<PilotSlot> slots(100000, identity_slot(1, 1, 2));
    const auto y = receive_pilots(ch, slots, NoiseModel{var}, 8);
    double acc = 0.0;
    for (const auto& v : y) acc += v.squaredNorm();
    EXPECT_NEAR(acc / (2.0 * double(y.size())), var, 0.02 * var);
}

TEST(ReceivePilots, EmpiricalSnr) {
    const auto one = ArraySpec::ula(1, kWl.lambda / 2);
    EffectiveChannel ech{GeometricChannel{one, one, kWl, {{cplx(1.0), Direction(), Direction(), 0.0}}},
                         {one, one, kWl, {}}, {one, one, kWl, {}}};
    const auto ch = ech.matrices();
    const auto noise = NoiseModel::from_snr_db(7.0);
    std::vector<PilotSlot> slots(20000, identity_slot(1, 1, 1));
    for (std::size_t t = 0; t < slots.size(); ++t) slots[t].pilot = std::polar(1.0, 2 * pi * double(t % 4) / 4);
    const auto y = receive_pilots(ch, slots, noise, 5);
    double noise_power = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) noise_power += std::norm(y[t][0] - slots[t].pilot);
    noise_power /= double(y.size());
    EXPECT_NEAR(10 * std::log10(1.0 / noise_power), 7.0, 10 * std::log10(1.05));
    EXPECT_NEAR(noise.snr_db(), 7.0, 1e-12);
}

TEST(ReceivePilots, DimensionMismatch) {
    const auto ch = random_matrices(6, 3, 2, 4);
    PilotSlot s = identity_slot(4, 3, 3);
    EXPECT_THROW(receive_pilots(ch, {s}, NoiseModel{1.0}, 1), DimensionMismatch);
}
