#pragma once

#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "slac/estimation/result.hpp"

namespace slac {

/// Singular-value soft thresholding: U diag(max(s - lambda, 0)) V^H.
inline CMat singular_value_threshold(const CMat& x, double lambda) {
    if (lambda <= 0.0) return x;
    const bool wide = x.rows() <= x.cols();
    const CMat gram = wide ? CMat(x * x.adjoint()) : CMat(x.adjoint() * x);
    Eigen::SelfAdjointEigenSolver<CMat> eig(gram);
    const Eigen::VectorXd s2 = eig.eigenvalues().cwiseMax(0.0);
    Eigen::VectorXd shrink(s2.size());
    for (Eigen::Index i = 0; i < s2.size(); ++i) {
        const double s = std::sqrt(s2[i]);
        shrink[i] = s > lambda ? (s - lambda) / s : 0.0;
    }
    const CMat& u = eig.eigenvectors();
    const CMat proj = u * shrink.asDiagonal() * u.adjoint();
    return wide ? CMat(proj * x) : CMat(x * proj);
}

/// Fixed-depth proximal gradient with per-layer step sizes and singular-value
/// thresholds:  h <- SVT_lambda_k(h - alpha_k A^H (A h - y)),  h_0 = 0.
/// The threshold acts on the N_MS x (N_BS * N_RIS) reshaping of the cascade;
/// the direct link, when present, takes plain gradient steps.
struct UnfoldedEstimator {
    std::vector<double> alpha;
    std::vector<double> lambda;

    int depth() const { return static_cast<int>(alpha.size()); }

    static UnfoldedEstimator uniform(int depth, double alpha, double lambda) {
        if (depth < 0) throw InvalidArgument("depth must be non-negative");
        return {std::vector<double>(std::size_t(depth), alpha), std::vector<double>(std::size_t(depth), lambda)};
    }

    void validate() const {
        if (alpha.size() != lambda.size()) throw InvalidArgument("alpha and lambda lengths differ");
        for (std::size_t k = 0; k < alpha.size(); ++k) {
            if (!std::isfinite(alpha[k]) || !(alpha[k] > 0.0)) throw InvalidArgument("step sizes must be finite and > 0");
            if (!std::isfinite(lambda[k]) || lambda[k] < 0.0) throw InvalidArgument("thresholds must be finite and >= 0");
        }
    }

    /// Runs layers [from, to) on h, given b = A^H y.
    void run_layers(const MeasurementOperator& op, const CVec& b, CVec& h, int from, int to) const {
        const auto& d = op.design();
        const Eigen::Index nc = Eigen::Index(d.n_ms) * d.n_bs * d.n_ris;
        for (int k = from; k < to; ++k) {
            h -= alpha[std::size_t(k)] * (op.normal(h) - b);
            if (lambda[std::size_t(k)] > 0.0) {
                Eigen::Map<CMat> r(h.data(), d.n_ms, nc / d.n_ms);
                r = singular_value_threshold(r, lambda[std::size_t(k)]);
            }
        }
    }

    CVec apply(const MeasurementOperator& op, const CVec& y) const {
        CVec h = CVec::Zero(op.cols());
        run_layers(op, op.adjoint(y), h, 0, depth());
        return h;
    }

    EstimationResult estimate(const MeasurementOperator& op, const std::vector<CVec>& observations) const {
        const auto& d = op.design();
        EstimationResult r;
        r.estimate = CascadedChannel::from_stacked(apply(op, stack_observations(observations)), d.n_ms, d.n_bs,
                                                   d.n_ris, d.with_direct);
        r.beamformers = optimize_beamformers(r.estimate);
        return r;
    }
};

inline EstimationResult unfolded_apply(const UnfoldedEstimator& est, const std::vector<CVec>& observations,
                                       const TrainingDesign& design) {
    return est.estimate(MeasurementOperator(design), observations);
}

/// Largest eigenvalue of A^H A by power iteration.
inline double operator_norm_squared(const MeasurementOperator& op, int iterations = 200) {
    CVec v = CVec::Ones(op.cols()).normalized();
    double lambda = 0.0;
    for (int i = 0; i < iterations; ++i) {
        const CVec w = op.normal(v);
        const double n = w.norm();
        if (!(n > 0.0)) return 0.0;
        lambda = n;
        v = w / n;
    }
    return lambda;
}

struct UnfoldSample {
    CVec observations;  // stacked y
    CVec truth;         // stacked h
};

struct UnfoldTrainOptions {
    int epochs = 20;
    /// Initial step in the normalized parameter space.
    double learning_rate = 0.1;
    double fd_step = 1e-4;
};

struct UnfoldTrainReport {
    std::vector<double> loss;  // loss[0] before training, then after each epoch
};

inline double mean_nmse(const UnfoldedEstimator& est, const MeasurementOperator& op,
                        const std::vector<UnfoldSample>& data) {
    if (data.empty()) throw EmptyDataset("dataset is empty");
    double acc = 0.0;
    for (const auto& s : data) acc += nmse(est.apply(op, s.observations), s.truth);
    return acc / double(data.size());
}

/// Trains the 2K layer scalars by gradient descent on the mean NMSE.
///
/// Parameters are normalized (alpha * ||A||^2, lambda / typical singular
/// value) so one learning rate suits both. Gradients are central finite
/// differences; a perturbation of layer k reuses the cached inputs of that
/// layer. A step is taken only if it lowers the loss; otherwise the rate is
/// halved (up to 30 times), so the reported loss never increases.
inline UnfoldedEstimator unfolded_train(const UnfoldedEstimator& initial, const MeasurementOperator& op,
                                        const std::vector<UnfoldSample>& data, const UnfoldTrainOptions& opts,
                                        UnfoldTrainReport* report = nullptr) {
    if (data.empty()) throw EmptyDataset("training dataset is empty");
    initial.validate();
    const int k = initial.depth();
    const double a_scale = 1.0 / operator_norm_squared(op);
    const auto& d = op.design();
    double l_scale = 0.0;
    for (const auto& s : data) l_scale += s.truth.head(Eigen::Index(d.n_ms) * d.n_bs * d.n_ris).norm();
    l_scale /= double(data.size()) * std::sqrt(double(std::min(d.n_ms, d.n_bs * d.n_ris)));
    if (!(l_scale > 0.0)) l_scale = 1.0;

    std::vector<CVec> b;
    b.reserve(data.size());
    for (const auto& s : data) b.push_back(op.adjoint(s.observations));

    Eigen::VectorXd theta(2 * k);
    for (int i = 0; i < k; ++i) {
        theta[i] = initial.alpha[std::size_t(i)] / a_scale;
        theta[k + i] = initial.lambda[std::size_t(i)] / l_scale;
    }
    auto decode = [&](const Eigen::VectorXd& th) {
        UnfoldedEstimator e;
        e.alpha.resize(std::size_t(k));
        e.lambda.resize(std::size_t(k));
        for (int i = 0; i < k; ++i) {
            e.alpha[std::size_t(i)] = std::max(th[i], 1e-6) * a_scale;
            e.lambda[std::size_t(i)] = std::max(th[k + i], 0.0) * l_scale;
        }
        return e;
    };
    auto project = [&](Eigen::VectorXd th) {
        for (int i = 0; i < k; ++i) {
            th[i] = std::max(th[i], 1e-6);
            th[k + i] = std::max(th[k + i], 0.0);
        }
        return th;
    };

    // states[s][j]: input of layer j for sample s under the current parameters
    std::vector<std::vector<CVec>> states(data.size());
    auto forward = [&](const UnfoldedEstimator& e) {
        double acc = 0.0;
        for (std::size_t s = 0; s < data.size(); ++s) {
            auto& st = states[s];
            st.assign(std::size_t(k) + 1, CVec());
            CVec h = CVec::Zero(op.cols());
            for (int j = 0; j < k; ++j) {
                st[std::size_t(j)] = h;
                e.run_layers(op, b[s], h, j, j + 1);
            }
            acc += nmse(h, data[s].truth);
            st[std::size_t(k)] = std::move(h);
        }
        return acc / double(data.size());
    };
    auto loss_from = [&](const UnfoldedEstimator& e, int layer) {
        double acc = 0.0;
        for (std::size_t s = 0; s < data.size(); ++s) {
            CVec h = states[s][std::size_t(layer)];
            e.run_layers(op, b[s], h, layer, k);
            acc += nmse(h, data[s].truth);
        }
        return acc / double(data.size());
    };

    theta = project(theta);
    double loss = forward(decode(theta));
    if (report) report->loss = {loss};
    double lr = opts.learning_rate;
    for (int epoch = 0; epoch < opts.epochs && k > 0; ++epoch) {
        Eigen::VectorXd grad(2 * k);
        for (int i = 0; i < 2 * k; ++i) {
            const int layer = i % k;
            const double h = opts.fd_step * std::max(1.0, std::abs(theta[i]));
            Eigen::VectorXd tp = theta, tm = theta;
            tp[i] += h;
            tm[i] -= h;
            // one-sided at the lambda >= 0 boundary
            if (i >= k && tm[i] < 0.0) {
                grad[i] = (loss_from(decode(tp), layer) - loss) / h;
                continue;
            }
            grad[i] = (loss_from(decode(tp), layer) - loss_from(decode(tm), layer)) / (2 * h);
        }
        const double gnorm = grad.norm();
        if (!(gnorm > 0.0)) break;
        bool accepted = false;
        for (int tries = 0; tries < 30; ++tries) {
            const Eigen::VectorXd cand = project(theta - (lr / gnorm) * grad);
            const double l = loss_from(decode(cand), 0);
            if (l < loss) {
                theta = cand;
                loss = forward(decode(theta));
                accepted = true;
                lr *= 1.5;
                break;
            }
            lr *= 0.5;
        }
        if (report) report->loss.push_back(loss);
        if (!accepted) break;
    }
    return decode(theta);
}

/// Plain-text form: one `key = value` per line (`depth`, `alpha_k`,
/// `lambda_k`, k = 1..K), shortest round-trip decimal representation.
inline void write_unfolded(std::ostream& os, const UnfoldedEstimator& est) {
    auto num = [](double v) {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, end);
    };
    os << "depth = " << est.depth() << '\n';
    for (int k = 0; k < est.depth(); ++k) os << "alpha_" << k + 1 << " = " << num(est.alpha[std::size_t(k)]) << '\n';
    for (int k = 0; k < est.depth(); ++k) os << "lambda_" << k + 1 << " = " << num(est.lambda[std::size_t(k)]) << '\n';
}

inline UnfoldedEstimator read_unfolded(std::istream& is) {
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw InvalidArgument("malformed estimator line: " + line);
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto parse = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw InvalidArgument("missing estimator key " + key);
        double v = 0.0;
        const auto& s = it->second;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("bad number for " + key);
        return v;
    };
    const double depth = parse("depth");
    if (depth < 0 || depth != std::floor(depth)) throw InvalidArgument("depth must be a non-negative integer");
    UnfoldedEstimator est;
    for (int k = 1; k <= int(depth); ++k) {
        est.alpha.push_back(parse("alpha_" + std::to_string(k)));
        est.lambda.push_back(parse("lambda_" + std::to_string(k)));
    }
    if (kv.size() != 1 + 2 * std::size_t(depth)) throw InvalidArgument("unexpected keys in estimator file");
    est.validate();
    return est;
}

}  // namespace slac
