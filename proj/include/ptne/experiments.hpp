#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptne/conditions.hpp"
#include "ptne/errors.hpp"
#include "ptne/measure.hpp"
#include "ptne/mechanism.hpp"
#include "ptne/partition.hpp"
#include "ptne/pe_solver.hpp"
#include "ptne/pyramid.hpp"
#include "ptne/qratio.hpp"
#include "ptne/rng.hpp"
#include "ptne/updates.hpp"

namespace ptne {

inline constexpr const char* library_version = "0.1.0";

enum class ExperimentKind {
    PerturbAgent,
    PerturbCenter,
    BinSweep,
    Converge,
    CheckPi,
    CheckPe,
    PiDemo
};

enum class DistributionKind { Empirical, Gmm };
enum class UpdateKind { Empirical, Pyramid };
enum class OutputFormat { Csv, Json };

namespace names {

inline std::string of(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::PerturbAgent: return "perturb-agent";
    case ExperimentKind::PerturbCenter: return "perturb-center";
    case ExperimentKind::BinSweep: return "bin-sweep";
    case ExperimentKind::Converge: return "converge";
    case ExperimentKind::CheckPi: return "check-pi";
    case ExperimentKind::CheckPe: return "check-pe";
    case ExperimentKind::PiDemo: return "pi-demo";
    }
    throw validation_error("unknown experiment kind");
}

inline ExperimentKind experiment_of(const std::string& s) {
    for (auto k : {ExperimentKind::PerturbAgent, ExperimentKind::PerturbCenter,
                   ExperimentKind::BinSweep, ExperimentKind::Converge, ExperimentKind::CheckPi,
                   ExperimentKind::CheckPe, ExperimentKind::PiDemo})
        if (of(k) == s) return k;
    throw validation_error("unknown experiment: " + s);
}

inline std::string of(DistributionKind k) {
    return k == DistributionKind::Empirical ? "empirical" : "gmm";
}

inline DistributionKind distribution_of(const std::string& s) {
    if (s == "empirical") return DistributionKind::Empirical;
    if (s == "gmm") return DistributionKind::Gmm;
    throw validation_error("unknown distribution kind: " + s);
}

inline std::string of(UpdateKind k) {
    return k == UpdateKind::Empirical ? "empirical" : "pyramid";
}

inline UpdateKind update_of(const std::string& s) {
    if (s == "empirical") return UpdateKind::Empirical;
    if (s == "pyramid") return UpdateKind::Pyramid;
    throw validation_error("unknown update kind: " + s);
}

inline std::string of(ThetaMode m) { return m == ThetaMode::MonteCarlo ? "mc" : "grid"; }

inline ThetaMode theta_mode_of(const std::string& s) {
    if (s == "mc") return ThetaMode::MonteCarlo;
    if (s == "grid") return ThetaMode::Grid;
    throw validation_error("unknown theta mode: " + s);
}

inline std::string of(ZeroBinPolicy p) {
    switch (p) {
    case ZeroBinPolicy::Error: return "error";
    case ZeroBinPolicy::Contract: return "contract";
    case ZeroBinPolicy::EpsilonFloor: return "epsilon-floor";
    }
    throw validation_error("unknown zero-bin policy");
}

inline ZeroBinPolicy zero_bin_policy_of(const std::string& s) {
    if (s == "error") return ZeroBinPolicy::Error;
    if (s == "contract") return ZeroBinPolicy::Contract;
    if (s == "epsilon-floor") return ZeroBinPolicy::EpsilonFloor;
    throw validation_error("unknown zero-bin policy: " + s);
}

} // namespace names

struct DistributionConfig {
    DistributionKind kind = DistributionKind::Empirical;
    int n_values = 5;
    double value_min = 0.0;
    double value_max = 1.0;
};

struct SweepConfig {
    double min = 1.0 / 30.0;
    double max = 1.0;
    double step = 1.0 / 30.0;
};

struct UpdateConfig {
    UpdateKind kind = UpdateKind::Empirical;
    double alpha = 1.0;
    /// Kernel base width as a fraction of the bin side (half-width is half
    /// of that).
    double kernel_base_frac = 0.1;
    double solver_tol = 1e-8;
};

struct PerturbConfig {
    double min = -1.0;
    double max = 1.0;
    double step = 1.0 / 30.0;
};

struct ConvergeConfig {
    std::size_t n = 10000;
    std::vector<std::size_t> checkpoints{100, 1000, 10000};
    double k = 1.0;
    std::size_t eval_grid = 512;
    std::vector<double> eps_ladder{0.2, 0.1, 0.05};
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::PerturbAgent;
    int dimension = 1;
    std::uint64_t seed = 1;
    std::size_t theta_samples = 500;
    ThetaMode theta_mode = ThetaMode::MonteCarlo;
    std::size_t peers = 200;
    int threads = 1;
    DistributionConfig distribution{};
    std::vector<double> bin_size{0.2};
    SweepConfig sweep{};
    UpdateConfig update{};
    PerturbConfig perturb{};
    ConvergeConfig converge{};
    PtsConfig payment{};
};

/// Canonical defaults per experiment, dimension and distribution model:
/// bin sides 0.2 in 1D and sqrt(0.2) per axis in 2D, five support values in
/// the unit box, 200 peers, update confidence 1, kernel base a tenth of the
/// bin, and offset sample counts / perturbation steps sized per setting.
inline ExperimentConfig default_config(ExperimentKind kind, int dimension,
                                       DistributionKind dist) {
    ExperimentConfig cfg;
    cfg.experiment = kind;
    cfg.dimension = dimension;
    cfg.distribution.kind = dist;
    cfg.update.kind = dist == DistributionKind::Empirical ? UpdateKind::Empirical
                                                          : UpdateKind::Pyramid;
    if (dimension == 1) {
        cfg.bin_size = {0.2};
        cfg.theta_samples = dist == DistributionKind::Empirical ? 500 : 200;
        cfg.perturb.step = 1.0 / 30.0;
    } else if (dimension == 2) {
        cfg.bin_size = {std::sqrt(0.2), std::sqrt(0.2)};
        cfg.theta_samples = dist == DistributionKind::Empirical ? 400 : 64;
        cfg.perturb.step = dist == DistributionKind::Empirical ? 1.0 / 10.0 : 1.0 / 8.0;
    } else {
        throw validation_error("default_config: dimension must be 1 or 2");
    }
    // The corner-mass demo is a deterministic construction; quadrature over
    // the offset family beats sampling it.
    if (kind == ExperimentKind::PiDemo) cfg.theta_mode = ThetaMode::Grid;
    return cfg;
}

inline void validate(const ExperimentConfig& cfg) {
    if (cfg.dimension != 1 && cfg.dimension != 2)
        throw validation_error("config: dimension must be 1 or 2");
    if (cfg.bin_size.size() != static_cast<std::size_t>(cfg.dimension) && cfg.bin_size.size() != 1)
        throw validation_error("config: bin_size needs one entry per dimension (or one shared)");
    for (double l : cfg.bin_size)
        if (!(l > 0.0)) throw validation_error("config: bin sides must be positive");
    if (cfg.theta_samples == 0) throw validation_error("config: theta_samples must be positive");
    if (cfg.peers == 0) throw validation_error("config: peers must be positive");
    if (cfg.threads < 1) throw validation_error("config: threads must be >= 1");
    if (cfg.distribution.n_values < 1)
        throw validation_error("config: n_values must be positive");
    if (!(cfg.distribution.value_min < cfg.distribution.value_max))
        throw validation_error("config: value range empty");
    if (!(cfg.update.alpha > 0.0 && cfg.update.alpha <= 1.0))
        throw validation_error("config: alpha must be in (0, 1]");
    if (!(cfg.update.kernel_base_frac > 0.0 && cfg.update.kernel_base_frac <= 1.0))
        throw validation_error("config: kernel_base_frac must be in (0, 1]");
    if (!(cfg.sweep.min > 0.0 && cfg.sweep.step > 0.0 && cfg.sweep.max >= cfg.sweep.min))
        throw validation_error("config: bad sweep range");
    if (!(cfg.perturb.step > 0.0 && cfg.perturb.max >= cfg.perturb.min))
        throw validation_error("config: bad perturbation range");
    if (cfg.converge.n == 0 || cfg.converge.checkpoints.empty())
        throw validation_error("config: bad convergence schedule");
    for (std::size_t c : cfg.converge.checkpoints)
        if (c == 0 || c > cfg.converge.n)
            throw validation_error("config: checkpoints must lie in [1, n]");
    if (!(cfg.converge.k > 0.0)) throw validation_error("config: k must be positive");
    if (!(cfg.payment.c > 0.0)) throw validation_error("config: payment c must be positive");
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    return {
        {"experiment", names::of(cfg.experiment)},
        {"dimension", cfg.dimension},
        {"seed", cfg.seed},
        {"theta_samples", cfg.theta_samples},
        {"theta_mode", names::of(cfg.theta_mode)},
        {"peers", cfg.peers},
        {"distribution",
         {{"kind", names::of(cfg.distribution.kind)},
          {"n_values", cfg.distribution.n_values},
          {"value_min", cfg.distribution.value_min},
          {"value_max", cfg.distribution.value_max}}},
        {"bin_size", cfg.bin_size},
        {"sweep", {{"min", cfg.sweep.min}, {"max", cfg.sweep.max}, {"step", cfg.sweep.step}}},
        {"update",
         {{"kind", names::of(cfg.update.kind)},
          {"alpha", cfg.update.alpha},
          {"kernel_base_frac", cfg.update.kernel_base_frac},
          {"solver_tol", cfg.update.solver_tol}}},
        {"perturb",
         {{"min", cfg.perturb.min}, {"max", cfg.perturb.max}, {"step", cfg.perturb.step}}},
        {"converge",
         {{"n", cfg.converge.n},
          {"checkpoints", cfg.converge.checkpoints},
          {"k", cfg.converge.k},
          {"eval_grid", cfg.converge.eval_grid},
          {"eps_ladder", cfg.converge.eps_ladder}}},
        {"payment",
         {{"c", cfg.payment.c},
          {"f_offset", cfg.payment.f_offset},
          {"zero_bin_policy", names::of(cfg.payment.zero_bin_policy)},
          {"epsilon_floor", cfg.payment.epsilon_floor}}},
    };
}

/// Overlays any keys present in j onto cfg; unknown keys are rejected.
/// `threads` is accepted as input but never emitted by to_json: worker count
/// is an execution detail and must not alter the output bytes or the config
/// hash.
inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
    static const std::vector<std::string> known{
        "experiment", "dimension", "seed",    "theta_samples", "theta_mode", "peers",
        "threads",    "distribution", "bin_size", "sweep",     "update",     "perturb",
        "converge",   "payment"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw validation_error("config: unknown key '" + key + "'");
    }
    if (j.contains("experiment")) cfg.experiment = names::experiment_of(j.at("experiment"));
    if (j.contains("dimension")) cfg.dimension = j.at("dimension");
    if (j.contains("seed")) cfg.seed = j.at("seed");
    if (j.contains("theta_samples")) cfg.theta_samples = j.at("theta_samples");
    if (j.contains("theta_mode")) cfg.theta_mode = names::theta_mode_of(j.at("theta_mode"));
    if (j.contains("peers")) cfg.peers = j.at("peers");
    if (j.contains("threads")) cfg.threads = j.at("threads");
    if (j.contains("distribution")) {
        const auto& d = j.at("distribution");
        if (d.contains("kind")) cfg.distribution.kind = names::distribution_of(d.at("kind"));
        if (d.contains("n_values")) cfg.distribution.n_values = d.at("n_values");
        if (d.contains("value_min")) cfg.distribution.value_min = d.at("value_min");
        if (d.contains("value_max")) cfg.distribution.value_max = d.at("value_max");
    }
    if (j.contains("bin_size")) cfg.bin_size = j.at("bin_size").get<std::vector<double>>();
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        if (s.contains("min")) cfg.sweep.min = s.at("min");
        if (s.contains("max")) cfg.sweep.max = s.at("max");
        if (s.contains("step")) cfg.sweep.step = s.at("step");
    }
    if (j.contains("update")) {
        const auto& u = j.at("update");
        if (u.contains("kind")) cfg.update.kind = names::update_of(u.at("kind"));
        if (u.contains("alpha")) cfg.update.alpha = u.at("alpha");
        if (u.contains("kernel_base_frac")) cfg.update.kernel_base_frac = u.at("kernel_base_frac");
        if (u.contains("solver_tol")) cfg.update.solver_tol = u.at("solver_tol");
    }
    if (j.contains("perturb")) {
        const auto& p = j.at("perturb");
        if (p.contains("min")) cfg.perturb.min = p.at("min");
        if (p.contains("max")) cfg.perturb.max = p.at("max");
        if (p.contains("step")) cfg.perturb.step = p.at("step");
    }
    if (j.contains("converge")) {
        const auto& c = j.at("converge");
        if (c.contains("n")) cfg.converge.n = c.at("n");
        if (c.contains("checkpoints"))
            cfg.converge.checkpoints = c.at("checkpoints").get<std::vector<std::size_t>>();
        if (c.contains("k")) cfg.converge.k = c.at("k");
        if (c.contains("eval_grid")) cfg.converge.eval_grid = c.at("eval_grid");
        if (c.contains("eps_ladder"))
            cfg.converge.eps_ladder = c.at("eps_ladder").get<std::vector<double>>();
    }
    if (j.contains("payment")) {
        const auto& p = j.at("payment");
        if (p.contains("c")) cfg.payment.c = p.at("c");
        if (p.contains("f_offset")) cfg.payment.f_offset = p.at("f_offset");
        if (p.contains("zero_bin_policy"))
            cfg.payment.zero_bin_policy = names::zero_bin_policy_of(p.at("zero_bin_policy"));
        if (p.contains("epsilon_floor")) cfg.payment.epsilon_floor = p.at("epsilon_floor");
    }
}

/// Builds a config from a JSON document: defaults for the named experiment,
/// dimension and distribution, with the document overlaid on top.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentKind kind =
        j.contains("experiment") ? names::experiment_of(j.at("experiment"))
                                 : ExperimentKind::PerturbAgent;
    int dim = j.contains("dimension") ? j.at("dimension").get<int>() : 1;
    DistributionKind dist = DistributionKind::Empirical;
    if (j.contains("distribution") && j.at("distribution").contains("kind"))
        dist = names::distribution_of(j.at("distribution").at("kind"));
    ExperimentConfig cfg = default_config(kind, dim, dist);
    apply_json(cfg, j);
    validate(cfg);
    return cfg;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct ResultRecord {
    std::string experiment;
    nlohmann::json config;
    std::uint64_t config_hash = 0;
    std::string version = library_version;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    nlohmann::json diagnostics = nlohmann::json::object();
    std::string timestamp; ///< empty by default so output is byte-stable
};

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    int count = std::min<int>(threads, static_cast<int>(n));
    pool.reserve(count);
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

} // namespace detail

inline std::string to_csv(const ResultRecord& r) {
    std::ostringstream out;
    out << "# experiment=" << r.experiment << " version=" << r.version
        << " config_hash=" << detail::hex64(r.config_hash);
    if (!r.timestamp.empty()) out << " generated=" << r.timestamp;
    out << "\n";
    for (std::size_t c = 0; c < r.columns.size(); ++c)
        out << (c ? "," : "") << r.columns[c];
    out << "\n";
    for (const auto& row : r.rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << detail::format_double(row[c]);
        out << "\n";
    }
    return out.str();
}

inline std::string to_json_string(const ResultRecord& r) {
    nlohmann::json j{
        {"experiment", r.experiment}, {"version", r.version},
        {"config", r.config},         {"config_hash", detail::hex64(r.config_hash)},
        {"columns", r.columns},       {"rows", r.rows},
        {"diagnostics", r.diagnostics},
    };
    if (!r.timestamp.empty()) j["timestamp"] = r.timestamp;
    return j.dump(2) + "\n";
}

inline std::string render(const ResultRecord& r, OutputFormat f) {
    return f == OutputFormat::Csv ? to_csv(r) : to_json_string(r);
}

inline void emit(const ResultRecord& r, const std::string& path, OutputFormat f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open output file: " + path);
    out << render(r, f);
    if (!out) throw io_error("write failed: " + path);
}

/// Spearman rank correlation (average ranks on ties).
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw validation_error("spearman_rho: need two equal-length samples");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            double avg = 0.5 * (i + j) + 1.0;
            for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) throw validation_error("spearman_rho: degenerate ranks");
    return num / std::sqrt(dx * dy);
}

template <std::size_t D>
struct GeneratedDistributions {
    Measure<D> truth;
    Measure<D> pub;
    std::vector<Point<D>> values;
    std::vector<double> truth_weights;
    std::vector<double> pub_weights;
    double min_gap = 0.0;
    double gmm_variance = 0.0;
    std::size_t redraws = 0;
};

/// Draws the shared support values uniformly from the value box, weights
/// them independently for the true and public distributions, and, for the
/// mixture model, centers one Gaussian per value with variance twice the
/// smallest pairwise distance between values.
template <std::size_t D>
GeneratedDistributions<D> gen_distributions(const DistributionConfig& dc, std::uint64_t seed) {
    auto n = static_cast<std::size_t>(dc.n_values);
    rng_engine veng(derive_seed(seed, "values"));
    std::vector<Point<D>> values(n);
    double min_gap = 0.0;
    std::size_t redraws = 0;
    for (;; ++redraws) {
        if (redraws > 100)
            throw validation_error("gen_distributions: cannot draw distinct support values");
        for (auto& v : values)
            for (std::size_t i = 0; i < D; ++i)
                v[i] = dc.value_min + uniform01(veng) * (dc.value_max - dc.value_min);
        min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                min_gap = std::min(min_gap, euclidean_distance(values[a], values[b]));
        if (n == 1 || min_gap > 1e-6) break;
    }

    auto draw_weights = [&](const char* label) {
        rng_engine eng(derive_seed(seed, label));
        std::vector<double> w(n);
        for (;;) {
            double sum = 0.0;
            for (auto& x : w) {
                x = uniform01(eng);
                sum += x;
            }
            if (sum > 0.0) {
                for (auto& x : w) x /= sum;
                return w;
            }
        }
    };

    GeneratedDistributions<D> out{
        empirical_measure<D>(values, draw_weights("truth-weights")),
        empirical_measure<D>(values, draw_weights("public-weights")),
        values,
        {},
        {},
        n > 1 ? min_gap : 0.0,
        0.0,
        redraws};
    out.truth_weights = weights_of(out.truth);
    out.pub_weights = weights_of(out.pub);

    if (dc.kind == DistributionKind::Gmm) {
        if (n < 2)
            throw validation_error("gen_distributions: mixture model needs at least two values");
        out.gmm_variance = 2.0 * out.min_gap;
        std::vector<Point<D>> vars(n);
        for (auto& v : vars)
            for (std::size_t i = 0; i < D; ++i) v[i] = out.gmm_variance;
        out.truth = gaussian_mixture<D>(values, vars, out.truth_weights);
        out.pub = gaussian_mixture<D>(values, vars, out.pub_weights);
    }
    return out;
}

namespace detail {

template <std::size_t D>
Point<D> bin_dims_of(const ExperimentConfig& cfg) {
    Point<D> l;
    for (std::size_t i = 0; i < D; ++i)
        l[i] = cfg.bin_size.size() == 1 ? cfg.bin_size[0] : cfg.bin_size[i];
    return l;
}

template <std::size_t D>
nlohmann::json point_json(const Point<D>& p) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t i = 0; i < D; ++i) a.push_back(p[i]);
    return a;
}

/// Agent posterior for the configured update applied at observation o.
/// Returns the posterior plus solver diagnostics when a kernel was fitted.
template <std::size_t D>
struct PosteriorBuild {
    Measure<D> posterior;
    nlohmann::json diagnostics;
    std::optional<PyramidKernel<D>> kernel;
};

template <std::size_t D>
PosteriorBuild<D> build_posterior(const ExperimentConfig& cfg, const Measure<D>& prior,
                                  const RegularPartitionSpace<D>& ps, const Point<D>& o) {
    if (cfg.update.kind == UpdateKind::Empirical) {
        return {empirical_update(prior, o, cfg.update.alpha),
                {{"update", "empirical"}, {"alpha", cfg.update.alpha}},
                std::nullopt};
    }
    Point<D> delta;
    for (std::size_t i = 0; i < D; ++i)
        delta[i] = 0.5 * cfg.update.kernel_base_frac * ps.bin_dims()[i];
    PeSolverOptions opts;
    opts.alpha = cfg.update.alpha;
    opts.tol = cfg.update.solver_tol;
    opts.quad.min_panels = 64;
    opts.quad.error_panels = 32;
    auto sol = solve_pe_apex(prior, o, delta, ps, opts);
    Measure<D> post = additive_update(prior, pyramid_measure(sol.kernel), cfg.update.alpha);
    nlohmann::json diag{{"update", "pyramid"},
                        {"alpha", cfg.update.alpha},
                        {"delta", point_json<D>(delta)},
                        {"apex", point_json<D>(sol.kernel.apex)},
                        {"solver_evaluations", sol.diagnostics.evaluations},
                        {"solver_objective", sol.diagnostics.objective},
                        {"solver_scale", sol.diagnostics.scale}};
    nlohmann::json res = nlohmann::json::array();
    for (std::size_t i = 0; i < D; ++i) res.push_back(sol.diagnostics.residuals[i]);
    diag["solver_residuals"] = res;
    return {post, diag, sol.kernel};
}

inline std::vector<double> arange(double lo, double hi, double step) {
    auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = lo + static_cast<double>(i) * step;
    return v;
}

template <std::size_t D>
ResultRecord run_perturb_impl(const ExperimentConfig& cfg, bool agent_side) {
    auto gen = gen_distributions<D>(cfg.distribution, derive_seed(cfg.seed, "dist"));
    RegularPartitionSpace<D> ps(bin_dims_of<D>(cfg));
    Point<D> o = gen.truth.sample(derive_seed(cfg.seed, "obs"), 1)[0];

    ResultRecord rec;
    rec.experiment = names::of(cfg.experiment);
    rec.config = to_json(cfg);
    rec.config_hash = fnv1a64(rec.config.dump());

    nlohmann::json dd{{"observation", point_json<D>(o)},
                      {"min_gap", gen.min_gap},
                      {"gmm_variance", gen.gmm_variance},
                      {"redraws", gen.redraws},
                      {"side", agent_side ? "agent" : "center"}};

    Measure<D> peer = gen.truth; // overwritten below
    if (agent_side) {
        auto built = build_posterior(cfg, gen.pub, ps, o);
        peer = built.posterior;
        dd["posterior"] = built.diagnostics;
    } else {
        auto pts = gen.truth.sample(derive_seed(cfg.seed, "peers"), cfg.peers);
        std::vector<double> w(pts.size(), 1.0 / static_cast<double>(pts.size()));
        peer = empirical_measure<D>(std::move(pts), std::move(w));
        dd["peers"] = cfg.peers;
    }

    auto thetas = ps.sample_theta(derive_seed(cfg.seed, "theta"), cfg.theta_samples);
    auto offsets = arange(cfg.perturb.min, cfg.perturb.max, cfg.perturb.step);

    std::vector<Point<D>> points;
    if constexpr (D == 1) {
        for (double a : offsets) points.push_back({o[0] + a});
    } else {
        for (double a : offsets)
            for (double b : offsets) points.push_back({o[0] + a, o[1] + b});
    }

    rec.columns = D == 1 ? std::vector<std::string>{"offset_x", "mean_pay", "std_dev",
                                                    "n_theta", "floored"}
                         : std::vector<std::string>{"offset_x", "offset_y", "mean_pay",
                                                    "std_dev", "n_theta", "floored"};
    rec.rows.resize(points.size());
    std::span<const Point<D>> tspan(thetas.data(), thetas.size());
    parallel_for(points.size(), cfg.threads, [&](std::size_t i) {
        PaymentEstimate est =
            expected_pay_over(cfg.payment, gen.pub, ps, points[i], peer, tspan);
        std::vector<double> row;
        for (std::size_t k = 0; k < D; ++k) row.push_back(points[i][k] - o[k]);
        row.push_back(est.mean);
        row.push_back(est.std_dev);
        row.push_back(static_cast<double>(est.n_theta));
        row.push_back(static_cast<double>(est.floored));
        rec.rows[i] = std::move(row);
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < rec.rows.size(); ++i)
        if (rec.rows[i][D] > rec.rows[best][D]) best = i;
    nlohmann::json am = nlohmann::json::array();
    for (std::size_t k = 0; k < D; ++k) am.push_back(rec.rows[best][k]);
    dd["argmax_offset"] = am;
    dd["argmax_mean"] = rec.rows[best][D];
    dd["grid_step"] = cfg.perturb.step;
    rec.diagnostics = std::move(dd);
    return rec;
}

template <std::size_t D>
ResultRecord run_bin_sweep_impl(const ExperimentConfig& cfg) {
    auto gen = gen_distributions<D>(cfg.distribution, derive_seed(cfg.seed, "dist"));

    // Truthful pairs are drawn from the true distribution and the payment is
    // priced against it too. With any other pricing the per-size expectation
    // depends on the bin size and the flatness being measured here is lost.
    std::size_t n_pairs = cfg.peers;
    auto r_pts = gen.truth.sample(derive_seed(cfg.seed, "sweep-r"), n_pairs);
    auto rr_pts = gen.truth.sample(derive_seed(cfg.seed, "sweep-rr"), n_pairs);

    // Canonical offsets in [0,1)^D, rescaled per bin size so every size sees
    // the same draws (common random numbers across the sweep).
    rng_engine teng(derive_seed(cfg.seed, "theta"));
    std::vector<Point<D>> units(cfg.theta_samples);
    for (auto& u : units)
        for (std::size_t i = 0; i < D; ++i) u[i] = uniform01(teng);

    auto sizes = arange(cfg.sweep.min, cfg.sweep.max, cfg.sweep.step);

    ResultRecord rec;
    rec.experiment = names::of(cfg.experiment);
    rec.config = to_json(cfg);
    rec.config_hash = fnv1a64(rec.config.dump());
    rec.columns = {"bin_size", "mean_pay", "var_pay", "se_mean", "n_pairs", "n_theta"};
    rec.rows.resize(sizes.size());

    parallel_for(sizes.size(), cfg.threads, [&](std::size_t si) {
        double s = sizes[si];
        Point<D> l;
        for (std::size_t i = 0; i < D; ++i) l[i] = std::pow(s, 1.0 / D);
        RegularPartitionSpace<D> ps(l);
        double sum = 0.0, sumsq = 0.0;
        std::vector<double> pair_means(n_pairs, 0.0);
        for (std::size_t p = 0; p < n_pairs; ++p) {
            double psum = 0.0;
            for (const auto& u : units) {
                Point<D> theta;
                for (std::size_t i = 0; i < D; ++i) theta[i] = u[i] * l[i];
                double pay =
                    bin_extended_pay(cfg.payment, gen.truth, ps, theta, r_pts[p], rr_pts[p]);
                psum += pay;
                sum += pay;
                sumsq += pay * pay;
            }
            pair_means[p] = psum / static_cast<double>(cfg.theta_samples);
        }
        auto total = static_cast<double>(n_pairs * cfg.theta_samples);
        double mean = sum / total;
        double var = std::max(0.0, (sumsq - total * mean * mean) / (total - 1.0));
        double msum = 0.0, mss = 0.0;
        for (double m : pair_means) msum += m;
        double mmean = msum / static_cast<double>(n_pairs);
        for (double m : pair_means) mss += (m - mmean) * (m - mmean);
        double se = std::sqrt(mss / (static_cast<double>(n_pairs) - 1.0) /
                              static_cast<double>(n_pairs));
        rec.rows[si] = {s,  mean, var, se, static_cast<double>(n_pairs),
                        static_cast<double>(cfg.theta_samples)};
    });

    std::vector<double> svec, vvec, mvec, sevec;
    for (const auto& row : rec.rows) {
        svec.push_back(row[0]);
        mvec.push_back(row[1]);
        vvec.push_back(row[2]);
        sevec.push_back(row[3]);
    }
    double grand = 0.0;
    for (double m : mvec) grand += m;
    grand /= static_cast<double>(mvec.size());
    double worst_dev = 0.0;
    for (std::size_t i = 0; i < mvec.size(); ++i)
        worst_dev = std::max(worst_dev, std::abs(mvec[i] - grand) / sevec[i]);
    rec.diagnostics = {{"spearman_var_size", spearman_rho(vvec, svec)},
                       {"grand_mean", grand},
                       {"max_abs_dev_over_se", worst_dev},
                       {"min_gap", gen.min_gap},
                       {"gmm_variance", gen.gmm_variance}};
    return rec;
}

template <std::size_t D>
ResultRecord run_converge_impl(const ExperimentConfig& cfg) {
    auto gen = gen_distributions<D>(cfg.distribution, derive_seed(cfg.seed, "dist"));
    RegularPartitionSpace<D> ps(bin_dims_of<D>(cfg));

    KernelBuilder<D> builder;
    if (cfg.update.kind == UpdateKind::Empirical) {
        builder = point_mass_kernel_builder<D>();
    } else {
        Point<D> delta0;
        for (std::size_t i = 0; i < D; ++i)
            delta0[i] = 0.5 * cfg.update.kernel_base_frac * ps.bin_dims()[i];
        builder = shrinking_pyramid_kernel_builder<D>(delta0);
    }

    auto samples = gen.truth.sample(derive_seed(cfg.seed, "obs-seq"), cfg.converge.n);

    // Evaluation grid over the union of both support boxes, slightly grown.
    Rect<D> box = gen.truth.support_box();
    Rect<D> pb = gen.pub.support_box();
    for (std::size_t i = 0; i < D; ++i) {
        box.low[i] = std::min(box.low[i], pb.low[i]);
        box.high[i] = std::max(box.high[i], pb.high[i]);
        double w = std::max(box.high[i] - box.low[i], 1e-6);
        box.low[i] -= 0.05 * w;
        box.high[i] += 0.05 * w;
    }
    std::vector<Point<D>> grid;
    auto per_axis = static_cast<std::size_t>(std::llround(
        std::pow(static_cast<double>(cfg.converge.eval_grid), 1.0 / D)));
    per_axis = std::max<std::size_t>(per_axis, 2);
    if constexpr (D == 1) {
        for (std::size_t a = 0; a < per_axis; ++a)
            grid.push_back({box.low[0] + (box.high[0] - box.low[0]) * a / (per_axis - 1.0)});
    } else {
        for (std::size_t a = 0; a < per_axis; ++a)
            for (std::size_t b = 0; b < per_axis; ++b)
                grid.push_back({box.low[0] + (box.high[0] - box.low[0]) * a / (per_axis - 1.0),
                                box.low[1] + (box.high[1] - box.low[1]) * b / (per_axis - 1.0)});
    }

    ResultRecord rec;
    rec.experiment = names::of(cfg.experiment);
    rec.config = to_json(cfg);
    rec.config_hash = fnv1a64(rec.config.dump());
    rec.columns = {"n", "ks_distance", "bound"};
    for (double eps : cfg.converge.eps_ladder)
        rec.columns.push_back("escape_eps_" + format_double(eps));

    auto checkpoints = cfg.converge.checkpoints;
    std::sort(checkpoints.begin(), checkpoints.end());

    UpdateSequenceState<D> state(cfg.converge.k, gen.pub);
    std::size_t next_cp = 0;
    for (std::size_t i = 0; i < samples.size() && next_cp < checkpoints.size(); ++i) {
        state = sequence_update(std::move(state), samples[i], builder);
        if (state.steps() == checkpoints[next_cp]) {
            auto rep = convergence_report(state, gen.truth, grid, cfg.converge.eps_ladder);
            double n = static_cast<double>(state.steps());
            double band = std::sqrt(std::log(2.0 / 0.01) / (2.0 * n)) +
                          cfg.converge.k / (cfg.converge.k + n);
            std::vector<double> row{n, rep.ks_distance, band};
            for (const auto& [eps, esc] : rep.concentration) {
                (void)eps;
                row.push_back(esc);
            }
            rec.rows.push_back(std::move(row));
            ++next_cp;
        }
    }
    rec.diagnostics = {{"update", names::of(cfg.update.kind)},
                       {"k", cfg.converge.k},
                       {"eval_points", grid.size()},
                       {"min_gap", gen.min_gap},
                       {"gmm_variance", gen.gmm_variance}};
    return rec;
}

/// Default competitor reports for the expectation check: axis-aligned
/// offsets at fractions of a bin plus, in 2D, the four half-bin diagonals.
template <std::size_t D>
std::vector<Point<D>> default_competitors(const Point<D>& o, const Point<D>& dims) {
    std::vector<Point<D>> out;
    const double fr[] = {0.25, 0.5, 1.0, 2.0};
    for (std::size_t i = 0; i < D; ++i)
        for (double f : fr)
            for (int s : {-1, 1}) {
                Point<D> p = o;
                p[i] += s * f * dims[i];
                out.push_back(p);
            }
    if constexpr (D == 2) {
        for (int sx : {-1, 1})
            for (int sy : {-1, 1})
                out.push_back({o[0] + sx * 0.5 * dims[0], o[1] + sy * 0.5 * dims[1]});
    }
    return out;
}

template <std::size_t D>
nlohmann::json report_json(const ConditionReport<D>& rep) {
    nlohmann::json j{{"passed", rep.passed},
                     {"worst_margin", rep.worst_margin},
                     {"worst_margin_se", rep.worst_margin_se},
                     {"violating_fraction", rep.violating_fraction},
                     {"n_theta", rep.n_theta},
                     {"zero_mass_bins", rep.zero_mass_bins},
                     {"boundary_mismatch_max", rep.boundary_mismatch_max},
                     {"boundary_scale", rep.boundary_scale},
                     {"boundary_pairs", rep.boundary_pairs},
                     {"boundary_skipped", rep.boundary_skipped},
                     {"boundary_ok", rep.boundary_ok}};
    if (rep.worst_competitor) j["worst_competitor"] = point_json<D>(*rep.worst_competitor);
    if (rep.face_residuals_valid) {
        nlohmann::json fr = nlohmann::json::array();
        for (std::size_t i = 0; i < D; ++i) fr.push_back(rep.face_residuals[i]);
        j["face_residuals"] = fr;
        j["face_scale"] = rep.face_scale;
    }
    nlohmann::json g = nlohmann::json::array();
    for (std::size_t i = 0; i < D; ++i) g.push_back(rep.payment_gradient[i]);
    j["payment_gradient"] = g;
    return j;
}

template <std::size_t D>
ResultRecord run_check_impl(const ExperimentConfig& cfg) {
    auto gen = gen_distributions<D>(cfg.distribution, derive_seed(cfg.seed, "dist"));
    RegularPartitionSpace<D> ps(bin_dims_of<D>(cfg));
    Point<D> o = gen.truth.sample(derive_seed(cfg.seed, "obs"), 1)[0];

    ConditionCheckOptions opts;
    opts.schedule = {cfg.theta_mode, cfg.theta_samples, derive_seed(cfg.seed, "theta")};
    opts.payment = cfg.payment;

    ResultRecord rec;
    rec.experiment = names::of(cfg.experiment);
    rec.config = to_json(cfg);
    rec.config_hash = fnv1a64(rec.config.dump());

    auto built = build_posterior(cfg, gen.pub, ps, o);

    Rect<D> region = gen.pub.support_box();
    for (std::size_t i = 0; i < D; ++i) {
        region.low[i] -= ps.bin_dims()[i];
        region.high[i] += ps.bin_dims()[i];
    }

    if (cfg.experiment == ExperimentKind::CheckPi) {
        auto rep = check_pi<D>(
            gen.pub, [&](const Point<D>&) { return built.posterior; }, ps, o, region, opts);
        rec.columns = {"passed", "worst_margin", "violating_fraction", "boundary_mismatch",
                       "n_theta"};
        rec.rows = {{rep.passed ? 1.0 : 0.0, rep.worst_margin, rep.violating_fraction,
                     rep.boundary_mismatch_max, static_cast<double>(rep.n_theta)}};
        rec.diagnostics = {{"report", report_json(rep)},
                           {"observation", point_json<D>(o)},
                           {"posterior", built.diagnostics}};
    } else {
        std::array<std::vector<double>, D> kinks;
        if (built.kernel) {
            Rect<D> s = built.kernel->support();
            for (std::size_t i = 0; i < D; ++i)
                for (double v : {s.low[i], built.kernel->apex[i], s.high[i]}) {
                    kinks[i].push_back(v - 0.5 * ps.bin_dims()[i]);
                    kinks[i].push_back(v + 0.5 * ps.bin_dims()[i]);
                }
        }
        auto rep = check_pe(gen.pub, built.posterior, ps, o,
                            default_competitors<D>(o, ps.bin_dims()), opts, kinks);
        rec.columns = {"passed", "worst_margin", "worst_margin_se", "n_theta"};
        rec.rows = {{rep.passed ? 1.0 : 0.0, rep.worst_margin, rep.worst_margin_se,
                     static_cast<double>(rep.n_theta)}};
        rec.diagnostics = {{"report", report_json(rep)},
                           {"observation", point_json<D>(o)},
                           {"posterior", built.diagnostics}};
    }
    return rec;
}

inline ResultRecord run_pi_demo_impl(const ExperimentConfig& cfg) {
    constexpr std::size_t D = 2;
    if (cfg.dimension != 2)
        throw validation_error("pi-demo: the corner construction needs dimension 2");
    RegularPartitionSpace<D> ps(bin_dims_of<D>(cfg));
    const Point<D>& l = ps.bin_dims();
    Point<D> o{0.5, 0.5};

    // Prior with unequal mass near the four corners of the bin-sized box
    // around o: the weight matrix is far from a product, so no base position
    // equalizes the ratio pointwise on opposite faces, yet sliding the base
    // always balances the face integrals.
    std::vector<Point<D>> means;
    std::vector<double> w{0.4, 0.3, 0.2, 0.1};
    std::vector<Point<D>> vars;
    for (int sx : {1, -1})
        for (int sy : {1, -1}) {
            means.push_back({o[0] + sx * 0.4 * l[0], o[1] + sy * 0.4 * l[1]});
            vars.push_back({0.03 * l[0] * l[0], 0.03 * l[1] * l[1]});
        }
    Measure<D> prior = gaussian_mixture<D>(means, vars, w);

    Point<D> delta;
    for (std::size_t i = 0; i < D; ++i) delta[i] = 0.5 * cfg.update.kernel_base_frac * l[i];
    PeSolverOptions sopts;
    sopts.alpha = cfg.update.alpha;
    sopts.tol = cfg.update.solver_tol;
    sopts.quad.min_panels = 64;
    sopts.quad.error_panels = 32;
    auto sol = solve_pe_apex(prior, o, delta, ps, sopts);
    Measure<D> post = additive_update(prior, pyramid_measure(sol.kernel), cfg.update.alpha);

    ConditionCheckOptions opts;
    opts.schedule = {cfg.theta_mode, cfg.theta_samples, derive_seed(cfg.seed, "theta")};
    opts.payment = cfg.payment;

    std::array<std::vector<double>, D> kinks;
    Rect<D> s = sol.kernel.support();
    for (std::size_t i = 0; i < D; ++i)
        for (double v : {s.low[i], sol.kernel.apex[i], s.high[i]}) {
            kinks[i].push_back(v - 0.5 * l[i]);
            kinks[i].push_back(v + 0.5 * l[i]);
        }

    Rect<D> region = prior.support_box();
    for (std::size_t i = 0; i < D; ++i) {
        region.low[i] -= l[i];
        region.high[i] += l[i];
    }

    auto pe = check_pe(prior, post, ps, o, default_competitors<D>(o, l), opts, kinks);
    auto pi = check_pi<D>(
        prior, [&](const Point<D>&) { return post; }, ps, o, region, opts);

    double mismatch_over_tol =
        pi.boundary_mismatch_max / (opts.boundary_tol * std::max(pi.boundary_scale, 1.0));

    ResultRecord rec;
    rec.experiment = names::of(cfg.experiment);
    rec.config = to_json(cfg);
    rec.config_hash = fnv1a64(rec.config.dump());
    rec.columns = {"pe_passed",         "pe_worst_margin", "pe_worst_margin_se",
                   "boundary_mismatch", "boundary_scale",  "mismatch_over_tol"};
    rec.rows = {{pe.passed ? 1.0 : 0.0, pe.worst_margin, pe.worst_margin_se,
                 pi.boundary_mismatch_max, pi.boundary_scale, mismatch_over_tol}};
    rec.diagnostics = {{"pe_report", report_json(pe)},
                       {"pi_report", report_json(pi)},
                       {"apex", point_json<D>(sol.kernel.apex)},
                       {"corner_weights", w},
                       {"observation", point_json<D>(o)}};
    return rec;
}

} // namespace detail

template <std::size_t D>
ResultRecord run_perturbation(const ExperimentConfig& cfg) {
    return detail::run_perturb_impl<D>(cfg, cfg.experiment != ExperimentKind::PerturbCenter);
}

template <std::size_t D>
ResultRecord run_bin_size_sweep(const ExperimentConfig& cfg) {
    return detail::run_bin_sweep_impl<D>(cfg);
}

template <std::size_t D>
ResultRecord run_convergence(const ExperimentConfig& cfg) {
    return detail::run_converge_impl<D>(cfg);
}

inline ResultRecord run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    auto dispatch = [&](auto fn1, auto fn2) {
        return cfg.dimension == 1 ? fn1(cfg) : fn2(cfg);
    };
    switch (cfg.experiment) {
    case ExperimentKind::PerturbAgent:
    case ExperimentKind::PerturbCenter:
        return dispatch(run_perturbation<1>, run_perturbation<2>);
    case ExperimentKind::BinSweep:
        return dispatch(run_bin_size_sweep<1>, run_bin_size_sweep<2>);
    case ExperimentKind::Converge:
        return dispatch(run_convergence<1>, run_convergence<2>);
    case ExperimentKind::CheckPi:
    case ExperimentKind::CheckPe:
        return dispatch(detail::run_check_impl<1>, detail::run_check_impl<2>);
    case ExperimentKind::PiDemo:
        return detail::run_pi_demo_impl(cfg);
    }
    throw validation_error("unknown experiment kind");
}

} // namespace ptne
