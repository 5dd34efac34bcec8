#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "truthts/agents.hpp"
#include "truthts/harness.hpp"
#include "truthts/linprog.hpp"
#include "truthts/model.hpp"

namespace truthts {

inline constexpr const char* kVersion = "1.0.0";

/// Config problem: malformed JSON, missing or unknown keys, bad values.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string key, std::size_t line, const std::string& what)
        : std::runtime_error(what), key_(std::move(key)), line_(line) {}
    const std::string& key() const { return key_; }
    /// 1-based line in the config text, 0 when unknown.
    std::size_t line() const { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

class UnknownPreset : public ParseError {
public:
    UnknownPreset(const std::string& name, std::size_t line)
        : ParseError("preset", line, "unknown preset '" + name + "'"), name_(name) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"appendix_a", "laplace_small", "sweep_n_d"};
    return names;
}

inline const char* preset_description(const std::string& name) {
    if (name == "appendix_a") return "two contexts (1,0),(1,0.5), beta (5/6,1/6), two arms, d = 2";
    if (name == "laplace_small") return "N = d = K = 2 under Gaussian and Laplace noise of equal variance";
    if (name == "sweep_n_d") return "K = 6 arms, contexts uniform on [0,1]^d, N x d grid of variants";
    return "";
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::TruthfulTS;
    AgentKind agent = AgentKind::Truthful;

    std::string label() const { return std::string(to_string(kind)) + "-" + to_string(agent); }
};

struct SweepSpec {
    std::vector<std::size_t> N{3, 5, 9};
    std::vector<std::size_t> d{5, 9};
};

struct ExperimentConfig {
    std::optional<std::string> preset;
    std::optional<BanditInstance> instance;
    std::size_t horizon = 0;
    std::size_t replications = 100;
    std::uint64_t seed = 0;
    std::vector<PolicySpec> policies;
    AgentModel agent;
    MechanismConfig mechanism;
    QuadratureConfig quadrature;
    std::size_t mc_samples = 4000;
    GridConfig grid;
    NoiseSpec noise;
    double linucb_alpha = std::numeric_limits<double>::quiet_NaN();
    std::size_t etc_pulls = 0;
    std::string output = "results";
    SweepSpec sweep;
    std::size_t threads = 1;
};

namespace detail {

using nlohmann::json;

inline std::size_t line_of_key(const std::string& text, const std::string& key) {
    const auto pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

struct Reader {
    const std::string& text;

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ParseError(key, line_of_key(text, key), key + ": " + msg);
    }

    void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) const {
        if (!obj.is_object()) fail(where, "expected an object");
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || it.key() == a;
            if (!ok) fail(it.key(), "unknown key" + (where.empty() ? std::string() : " in '" + where + "'"));
        }
    }

    double number(const json& v, const std::string& key) const {
        if (!v.is_number()) fail(key, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(key, "expected a finite number");
        return x;
    }

    std::uint64_t count(const json& v, const std::string& key, std::uint64_t min = 0) const {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
            fail(key, "expected a non-negative integer");
        const auto x = v.get<std::uint64_t>();
        if (x < min) fail(key, "must be at least " + std::to_string(min));
        return x;
    }

    std::string string(const json& v, const std::string& key) const {
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    bool boolean(const json& v, const std::string& key) const {
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    Vector vector(const json& v, const std::string& key) const {
        if (!v.is_array() || v.empty()) fail(key, "expected a non-empty array of numbers");
        Vector out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = number(v[i], key);
        return out;
    }

    Matrix matrix(const json& v, const std::string& key) const {
        if (!v.is_array() || v.empty()) fail(key, "expected a non-empty array of rows");
        const Vector first = vector(v[0], key);
        Matrix out(static_cast<Eigen::Index>(v.size()), first.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Vector row = vector(v[i], key);
            if (row.size() != first.size()) fail(key, "rows have different lengths");
            out.row(static_cast<Eigen::Index>(i)) = row.transpose();
        }
        return out;
    }

    NoiseSpec noise(const json& v) const {
        only_keys(v, "noise", {"kind", "variance"});
        NoiseSpec n;
        if (v.contains("kind")) {
            const std::string k = string(v["kind"], "kind");
            if (k == "Gaussian") n.kind = NoiseKind::Gaussian;
            else if (k == "Laplace") n.kind = NoiseKind::Laplace;
            else fail("kind", "expected Gaussian or Laplace");
        }
        if (v.contains("variance")) {
            n.variance = number(v["variance"], "variance");
            if (!(n.variance > 0.0)) fail("variance", "must be positive");
        }
        return n;
    }

    BanditInstance instance(const json& v) const {
        only_keys(v, "instance", {"contexts", "beta", "prior_means", "prior_covs", "beta_known"});
        for (const char* req : {"contexts", "beta", "prior_means", "prior_covs"})
            if (!v.contains(req)) fail(req, "missing required key in 'instance'");
        BanditInstance inst;
        inst.contexts = matrix(v["contexts"], "contexts");
        inst.beta = vector(v["beta"], "beta");
        inst.prior_means = matrix(v["prior_means"], "prior_means");
        inst.K = static_cast<std::size_t>(inst.prior_means.rows());
        inst.d = static_cast<std::size_t>(inst.contexts.cols());
        const json& covs = v["prior_covs"];
        if (!covs.is_array()) fail("prior_covs", "expected an array of matrices");
        for (const auto& c : covs) inst.prior_covs.push_back(matrix(c, "prior_covs"));
        if (v.contains("beta_known")) inst.beta_known = boolean(v["beta_known"], "beta_known");
        return inst;
    }

    PolicySpec policy(const json& v, AgentKind default_agent) const {
        PolicySpec p;
        p.agent = default_agent;
        std::string name;
        if (v.is_string()) {
            name = v.get<std::string>();
        } else {
            only_keys(v, "policies", {"policy", "agent"});
            if (!v.contains("policy")) fail("policy", "missing required key in policy entry");
            name = string(v["policy"], "policy");
            if (v.contains("agent")) {
                const auto a = parse_agent_kind(string(v["agent"], "agent"));
                if (!a) fail("agent", "expected Truthful or Strategic");
                p.agent = *a;
            }
        }
        const auto k = parse_policy_kind(name);
        if (!k) fail("policies", "unknown policy '" + name + "'");
        p.kind = *k;
        return p;
    }
};

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

}  // namespace detail

/// Strict parse of the experiment schema documented in the README.
inline ExperimentConfig parse_config(const std::string& text) {
    using detail::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("", detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0), std::string("invalid JSON: ") + e.what());
    }
    const detail::Reader rd{text};
    rd.only_keys(root, "", {"preset", "instance", "horizon", "replications", "seed", "policies", "agent", "mechanism",
                            "quadrature", "mc_samples", "grid", "noise", "linucb_alpha", "etc_pulls", "output", "sweep",
                            "threads"});
    ExperimentConfig cfg;
    if (!root.contains("horizon")) throw ParseError("horizon", 0, "horizon: missing required key");
    cfg.horizon = rd.count(root["horizon"], "horizon", 1);

    if (root.contains("preset") == root.contains("instance"))
        rd.fail(root.contains("preset") ? "preset" : "instance", "exactly one of 'preset' and 'instance' is required");
    if (root.contains("preset")) {
        const std::string name = rd.string(root["preset"], "preset");
        if (std::find(preset_names().begin(), preset_names().end(), name) == preset_names().end())
            throw UnknownPreset(name, detail::line_of_key(text, "preset"));
        cfg.preset = name;
    } else {
        cfg.instance = rd.instance(root["instance"]);
    }

    if (root.contains("replications")) cfg.replications = rd.count(root["replications"], "replications", 1);
    if (root.contains("seed")) cfg.seed = rd.count(root["seed"], "seed");
    if (root.contains("threads")) cfg.threads = rd.count(root["threads"], "threads", 1);
    if (root.contains("mc_samples")) cfg.mc_samples = rd.count(root["mc_samples"], "mc_samples", 1);
    if (root.contains("etc_pulls")) cfg.etc_pulls = rd.count(root["etc_pulls"], "etc_pulls");
    if (root.contains("linucb_alpha")) {
        cfg.linucb_alpha = rd.number(root["linucb_alpha"], "linucb_alpha");
        if (cfg.linucb_alpha < 0.0) rd.fail("linucb_alpha", "must be non-negative");
    }
    if (root.contains("output")) cfg.output = rd.string(root["output"], "output");
    if (root.contains("noise")) cfg.noise = rd.noise(root["noise"]);

    if (root.contains("agent")) {
        const json& a = root["agent"];
        if (a.is_string()) {
            const auto k = parse_agent_kind(a.get<std::string>());
            if (!k) rd.fail("agent", "expected Truthful or Strategic");
            cfg.agent.kind = *k;
        } else {
            rd.only_keys(a, "agent", {"kind", "indifference"});
            if (a.contains("kind")) {
                const auto k = parse_agent_kind(rd.string(a["kind"], "kind"));
                if (!k) rd.fail("kind", "expected Truthful or Strategic");
                cfg.agent.kind = *k;
            }
            if (a.contains("indifference")) {
                cfg.agent.indifference = rd.number(a["indifference"], "indifference");
                if (cfg.agent.indifference < 0.0) rd.fail("indifference", "must be non-negative");
            }
        }
    }

    if (root.contains("policies")) {
        const json& ps = root["policies"];
        if (!ps.is_array() || ps.empty()) rd.fail("policies", "expected a non-empty array");
        for (const auto& p : ps) cfg.policies.push_back(rd.policy(p, cfg.agent.kind));
    } else {
        cfg.policies = {{PolicyKind::TruthfulTS, cfg.agent.kind}, {PolicyKind::StandardTS, cfg.agent.kind}};
    }

    if (root.contains("mechanism")) {
        const json& m = root["mechanism"];
        rd.only_keys(m, "mechanism", {"ic_margin", "conflict_tol", "mode", "beta_source"});
        if (m.contains("ic_margin")) {
            cfg.mechanism.ic_margin = rd.number(m["ic_margin"], "ic_margin");
            if (cfg.mechanism.ic_margin < 0.0) rd.fail("ic_margin", "must be non-negative");
        }
        if (m.contains("conflict_tol")) {
            cfg.mechanism.conflict_tol = rd.number(m["conflict_tol"], "conflict_tol");
            if (!(cfg.mechanism.conflict_tol > 0.0)) rd.fail("conflict_tol", "must be positive");
        }
        if (m.contains("mode")) {
            const std::string s = rd.string(m["mode"], "mode");
            if (s == "LpWithFallback") cfg.mechanism.mode = MechanismMode::LpWithFallback;
            else if (s == "FallbackOnly") cfg.mechanism.mode = MechanismMode::FallbackOnly;
            else rd.fail("mode", "expected LpWithFallback or FallbackOnly");
        }
        if (m.contains("beta_source")) {
            const std::string s = rd.string(m["beta_source"], "beta_source");
            if (s == "Known") cfg.mechanism.beta_source = BetaSource::Known;
            else if (s == "EmpiricalLaplaceSmoothed") cfg.mechanism.beta_source = BetaSource::EmpiricalLaplaceSmoothed;
            else rd.fail("beta_source", "expected Known or EmpiricalLaplaceSmoothed");
        }
    }

    if (root.contains("quadrature")) {
        const json& q = root["quadrature"];
        rd.only_keys(q, "quadrature", {"panels_per_window", "span_sd"});
        if (q.contains("panels_per_window")) {
            cfg.quadrature.panels_per_window = rd.count(q["panels_per_window"], "panels_per_window", 2);
            if (cfg.quadrature.panels_per_window % 2 != 0) rd.fail("panels_per_window", "must be even");
        }
        if (q.contains("span_sd")) {
            cfg.quadrature.span_sd = rd.number(q["span_sd"], "span_sd");
            if (!(cfg.quadrature.span_sd > 0.0)) rd.fail("span_sd", "must be positive");
        }
    }

    if (root.contains("grid")) {
        const json& g = root["grid"];
        rd.only_keys(g, "grid", {"points_per_axis", "width_sd"});
        if (g.contains("points_per_axis")) cfg.grid.points_per_axis = rd.count(g["points_per_axis"], "points_per_axis", 1);
        if (g.contains("width_sd")) {
            cfg.grid.width_sd = rd.number(g["width_sd"], "width_sd");
            if (!(cfg.grid.width_sd > 0.0)) rd.fail("width_sd", "must be positive");
        }
    }

    if (root.contains("sweep")) {
        if (cfg.preset != "sweep_n_d") rd.fail("sweep", "only valid with preset sweep_n_d");
        const json& s = root["sweep"];
        rd.only_keys(s, "sweep", {"N", "d"});
        auto list = [&](const char* key, std::vector<std::size_t>& out) {
            if (!s.contains(key)) return;
            const json& v = s[key];
            if (!v.is_array() || v.empty()) rd.fail(key, "expected a non-empty array of integers");
            out.clear();
            for (const auto& e : v) out.push_back(rd.count(e, key, 1));
        };
        list("N", cfg.sweep.N);
        list("d", cfg.sweep.d);
    }

    if (cfg.instance) {
        cfg.instance->horizon = cfg.horizon;
        cfg.instance->noise = cfg.noise;
        const auto issues = validate_instance(*cfg.instance);
        if (!issues.empty()) throw ParseError("instance", detail::line_of_key(text, "instance"),
                                              "instance: " + InvalidInstance::describe(issues));
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("", 0, "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Presets

inline BanditInstance appendix_a_instance(std::size_t horizon = 1, NoiseSpec noise = {}) {
    BanditInstance inst;
    inst.K = 2;
    inst.d = 2;
    inst.contexts = Matrix(2, 2);
    inst.contexts << 1.0, 0.0, 1.0, 0.5;
    inst.beta = Vector(2);
    inst.beta << 5.0 / 6.0, 1.0 / 6.0;
    inst.prior_means = Matrix(2, 2);
    inst.prior_means << 1.0, 0.0, -1.0, 1.0;
    inst.prior_covs = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
    inst.noise = noise;
    inst.horizon = horizon;
    return inst;
}

/// Two orthogonal unit contexts arriving uniformly; priors mu_1 = (0,1),
/// mu_2 = (1,0), V = I.
inline BanditInstance laplace_small_instance(std::size_t horizon, NoiseSpec noise) {
    BanditInstance inst;
    inst.K = 2;
    inst.d = 2;
    inst.contexts = Matrix::Identity(2, 2);
    inst.beta = Vector::Constant(2, 0.5);
    inst.prior_means = Matrix(2, 2);
    inst.prior_means << 0.0, 1.0, 1.0, 0.0;
    inst.prior_covs = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
    inst.noise = noise;
    inst.horizon = horizon;
    return inst;
}

/// K = 6, V_k = I, mu_k = e_{(k mod d)}, N contexts uniform on [0,1]^d drawn
/// from the seed, uniform arrivals.
inline BanditInstance sweep_instance(std::size_t N, std::size_t d, std::size_t horizon, NoiseSpec noise,
                                     std::uint64_t seed) {
    BanditInstance inst;
    inst.K = 6;
    inst.d = d;
    RngStream rng(seed, {0, 0, Purpose::InstanceContexts, N * 1000 + d});
    inst.contexts = Matrix(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
    for (Eigen::Index n = 0; n < inst.contexts.rows(); ++n)
        for (Eigen::Index i = 0; i < inst.contexts.cols(); ++i) inst.contexts(n, i) = rng.uniform();
    inst.beta = Vector::Constant(static_cast<Eigen::Index>(N), 1.0 / static_cast<double>(N));
    inst.prior_means = Matrix::Zero(6, static_cast<Eigen::Index>(d));
    for (Eigen::Index k = 0; k < 6; ++k) inst.prior_means(k, k % static_cast<Eigen::Index>(d)) = 1.0;
    inst.prior_covs.assign(6, Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
    inst.noise = noise;
    inst.horizon = horizon;
    return inst;
}

struct Variant {
    std::string name;
    BanditInstance inst;
};

inline std::vector<Variant> expand_variants(const ExperimentConfig& cfg) {
    std::vector<Variant> out;
    if (cfg.instance) {
        out.push_back({"custom", *cfg.instance});
    } else if (*cfg.preset == "appendix_a") {
        out.push_back({"appendix_a", appendix_a_instance(cfg.horizon, cfg.noise)});
    } else if (*cfg.preset == "laplace_small") {
        out.push_back({"gaussian", laplace_small_instance(cfg.horizon, NoiseSpec::gaussian(cfg.noise.variance))});
        out.push_back({"laplace", laplace_small_instance(cfg.horizon, NoiseSpec::laplace(cfg.noise.variance))});
    } else if (*cfg.preset == "sweep_n_d") {
        for (auto N : cfg.sweep.N)
            for (auto d : cfg.sweep.d)
                out.push_back({"N" + std::to_string(N) + "_d" + std::to_string(d),
                               sweep_instance(N, d, cfg.horizon, cfg.noise, cfg.seed)});
    } else {
        throw UnknownPreset(*cfg.preset, 0);
    }
    for (auto& v : out) {
        require_valid(v.inst);
        if (v.inst.noise.kind == NoiseKind::Laplace && v.inst.d > 2)
            for (const auto& p : cfg.policies)
                if (p.kind == PolicyKind::TruthfulTS || p.kind == PolicyKind::StandardTS || p.kind == PolicyKind::Greedy)
                    throw ParseError("noise", 0, "noise: Laplace noise needs the grid posterior, which supports d <= 2");
    }
    return out;
}

inline PolicyConfig policy_config(const ExperimentConfig& cfg, PolicyKind kind) {
    PolicyConfig pc;
    pc.kind = kind;
    pc.mechanism = cfg.mechanism;
    pc.quadrature = cfg.quadrature;
    pc.grid = cfg.grid;
    pc.mc_samples = cfg.mc_samples;
    pc.linucb_alpha = cfg.linucb_alpha;
    pc.etc_pulls = cfg.etc_pulls;
    return pc;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline const char* kRegretHeader = "policy,replication_agg,t,mean_cum_regret,ci95,frac_misreport,frac_conflict,frac_lp_path";
inline const char* kDiagnosticsHeader = "policy,t,context,arm,suboptimal_pulls,lp_objective_mean";

inline void write_regret_csv(std::ostream& os, const std::vector<RegretReport>& reports) {
    os << kRegretHeader << '\n';
    for (const auto& r : reports)
        for (std::size_t t = 0; t < r.mean_cum_regret.size(); ++t)
            os << r.label << ',' << r.replications << ',' << (t + 1) << ',' << format_double(r.mean_cum_regret[t]) << ','
               << format_double(r.ci95[t]) << ',' << format_double(r.frac_misreport[t]) << ','
               << format_double(r.frac_conflict[t]) << ',' << format_double(r.frac_lp_path[t]) << '\n';
}

inline void write_diagnostics_csv(std::ostream& os, const std::vector<RegretReport>& reports) {
    os << kDiagnosticsHeader << '\n';
    for (const auto& r : reports)
        for (std::size_t c = 0; c < r.checkpoint_steps.size(); ++c) {
            const Matrix& pulls = r.suboptimal_pulls[c];
            for (Eigen::Index n = 0; n < pulls.rows(); ++n)
                for (Eigen::Index k = 0; k < pulls.cols(); ++k)
                    os << r.label << ',' << r.checkpoint_steps[c] << ',' << (n + 1) << ',' << (k + 1) << ','
                       << format_double(pulls(n, k)) << ',' << format_double(r.checkpoint_objective_mean[c]) << '\n';
        }
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    body(os);
    os.flush();
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace detail

/// Regret CSV; an empty report list gives a header-only file.
inline void emit_csv(const std::vector<RegretReport>& reports, const std::filesystem::path& path) {
    detail::write_file(path, [&](std::ostream& os) { write_regret_csv(os, reports); });
}

inline void emit_diagnostics_csv(const std::vector<RegretReport>& reports, const std::filesystem::path& path) {
    detail::write_file(path, [&](std::ostream& os) { write_diagnostics_csv(os, reports); });
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Effective value of every tunable, for the run manifest.
inline nlohmann::json manifest_json(const ExperimentConfig& cfg, const std::vector<Variant>& variants) {
    using detail::json;
    json m;
    m["tool"] = "truthts";
    m["version"] = kVersion;
    m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
#ifdef __VERSION__
    m["compiler"] = __VERSION__;
#endif
    m["timestamp"] = utc_timestamp();
    json c;
    if (cfg.preset) c["preset"] = *cfg.preset;
    c["horizon"] = cfg.horizon;
    c["replications"] = cfg.replications;
    c["seed"] = cfg.seed;
    c["threads"] = cfg.threads;
    c["output"] = cfg.output;
    json pol = json::array();
    for (const auto& p : cfg.policies) pol.push_back({{"policy", to_string(p.kind)}, {"agent", to_string(p.agent)}});
    c["policies"] = pol;
    c["agent"] = {{"kind", to_string(cfg.agent.kind)}, {"tiebreak", "PreferTruth"}, {"indifference", cfg.agent.indifference}};
    c["mechanism"] = {{"ic_margin", cfg.mechanism.ic_margin},
                      {"conflict_tol", cfg.mechanism.conflict_tol},
                      {"mode", to_string(cfg.mechanism.mode)},
                      {"beta_source", to_string(cfg.mechanism.beta_source)},
                      {"lp_accept_tol", 1e-8},
                      {"independence_rank_tol", 1e-9}};
    const lp::SimplexOptions so;
    c["simplex"] = {{"optimality_tol", so.optimality_tol},     {"pivot_tol", so.pivot_tol},
                    {"breakdown_pivot", so.breakdown_pivot}, {"feasibility_tol", so.feasibility_tol},
                    {"degenerate_limit", so.degenerate_limit}, {"pricing", "Dantzig then Bland"}};
    c["quadrature"] = {{"rule", "composite Simpson"},
                       {"panels_per_window", cfg.quadrature.panels_per_window},
                       {"span_sd", cfg.quadrature.span_sd}};
    c["mc_samples"] = cfg.mc_samples;
    c["grid"] = {{"points_per_axis", cfg.grid.points_per_axis}, {"width_sd", cfg.grid.width_sd}, {"max_dimension", 2}};
    c["noise"] = {{"kind", to_string(cfg.noise.kind)}, {"variance", cfg.noise.variance}};
    c["likelihood_variance"] = "noise variance";
    c["linucb_alpha"] = std::isnan(cfg.linucb_alpha) ? json(default_linucb_alpha(cfg.horizon)) : json(cfg.linucb_alpha);
    c["etc_pulls"] = cfg.etc_pulls;
    c["eps_greedy_schedule"] = "min(1, t^(-1/3))";
    c["checkpoints"] = checkpoints(cfg.horizon);
    if (cfg.preset == std::optional<std::string>("sweep_n_d")) c["sweep"] = {{"N", cfg.sweep.N}, {"d", cfg.sweep.d}};
    m["config"] = c;
    json vs = json::array();
    for (const auto& v : variants) {
        vs.push_back({{"name", v.name},
                      {"K", v.inst.K},
                      {"d", v.inst.d},
                      {"N", v.inst.N()},
                      {"contexts", detail::to_json(v.inst.contexts)},
                      {"beta", detail::to_json(v.inst.beta)},
                      {"beta_known", v.inst.beta_known},
                      {"prior_means", detail::to_json(v.inst.prior_means)},
                      {"noise", {{"kind", to_string(v.inst.noise.kind)}, {"variance", v.inst.noise.variance}}},
                      {"etc_pulls", cfg.etc_pulls > 0 ? cfg.etc_pulls : default_etc_pulls(cfg.horizon, v.inst.K)}});
    }
    m["variants"] = vs;
    m["streams"] = {{"ground_truth", "(replication, 0, GroundTruth)"},
                    {"context", "(replication, t, Context)"},
                    {"arm", "(replication, t, Arm)"},
                    {"noise", "(replication, t, Noise)"},
                    {"thompson_mc", "(replication, t, ThompsonMc, context)"}};
    return m;
}

struct VariantResult {
    Variant variant;
    std::vector<RegretReport> reports;
};

using ProgressFn = std::function<void(const std::string& variant, const std::string& policy)>;

/// Runs every (variant, policy) pair and writes regret.csv, diagnostics.csv
/// (per variant subdirectory when there is more than one variant) and
/// manifest.json under `out_dir`.
inline std::vector<VariantResult> run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                                 const ProgressFn& progress = {}) {
    const std::vector<Variant> variants = expand_variants(cfg);
    std::vector<VariantResult> results;
    for (const auto& v : variants) {
        VariantResult vr{v, {}};
        for (const auto& spec : cfg.policies) {
            if (progress) progress(v.name, spec.label());
            AgentModel agent = cfg.agent;
            agent.kind = spec.agent;
            const ReplicatedRun run =
                run_replications(v.inst, policy_config(cfg, spec.kind), agent, cfg.seed, cfg.replications, cfg.threads);
            vr.reports.push_back(aggregate(run.traces, run.gts, v.inst, spec.label()));
        }
        const std::filesystem::path dir = variants.size() > 1 ? out_dir / v.name : out_dir;
        emit_csv(vr.reports, dir / "regret.csv");
        emit_diagnostics_csv(vr.reports, dir / "diagnostics.csv");
        results.push_back(std::move(vr));
    }
    detail::write_file(out_dir / "manifest.json",
                       [&](std::ostream& os) { os << manifest_json(cfg, variants).dump(2) << '\n'; });
    return results;
}

}  // namespace truthts
