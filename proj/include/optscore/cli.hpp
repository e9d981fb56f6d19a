#pragma once

// Experiment configuration (JSON), validation and the batch runner behind the
// command-line tool. See README for the configuration grammar.

#include "optscore/dgp.hpp"
#include "optscore/error.hpp"
#include "optscore/evaluation.hpp"
#include "optscore/inference.hpp"
#include "optscore/io.hpp"
#include "optscore/models.hpp"
#include "optscore/scores.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace optscore {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { simulate, single_model, pool, empirical, gw, tau_star, score_density, summarize };

inline std::optional<ExperimentKind> parse_kind(std::string_view s) {
    if (s == "simulate") return ExperimentKind::simulate;
    if (s == "single_model") return ExperimentKind::single_model;
    if (s == "pool") return ExperimentKind::pool;
    if (s == "empirical") return ExperimentKind::empirical;
    if (s == "gw") return ExperimentKind::gw;
    if (s == "tau_star") return ExperimentKind::tau_star;
    if (s == "score_density") return ExperimentKind::score_density;
    if (s == "summarize") return ExperimentKind::summarize;
    return std::nullopt;
}

struct InputSpec {
    std::string path;
    bool prices = false;
    std::optional<std::string> column;
};

/// Parsed and defaulted configuration. `echo` holds the normalized JSON that
/// goes into the manifest; running it again reproduces the outputs.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::simulate;
    std::uint64_t seed = 0;
    std::optional<DgpSpec> dgp;
    std::optional<InputSpec> input;
    ModelFamily model = ModelFamily::arch1;
    std::vector<ModelFamily> families;
    std::vector<RuleId> optimizer_rules;
    std::vector<RuleId> evaluation_rules;
    std::size_t T = 0;
    std::size_t est_start = 1000;
    std::size_t J = 1000;
    std::size_t zeta = 50;
    std::optional<std::size_t> tau;
    std::size_t refit_every = 1;
    WindowKind window = WindowKind::expanding;
    std::string protocol = "single_model";   // gw / tau_star: which experiment supplies the differences
    std::size_t M = 500;
    double alpha = 0.05;
    unsigned threads = 0;
    bool per_step = false;
    nlohmann::json echo;
};

struct Diagnostics {
    std::vector<std::string> messages;
    void add(std::string m) { messages.push_back(std::move(m)); }
    [[nodiscard]] bool empty() const noexcept { return messages.empty(); }
};

namespace detail {

using json = nlohmann::json;

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> k{"experiment", "seed", "dgp", "input", "model", "families",
                                         "optimizer_rules", "evaluation_rules", "T", "est_start", "J", "zeta",
                                         "tau", "refit_every", "window", "protocol", "M", "alpha", "threads",
                                         "per_step"};
    return k;
}

template <class T>
std::optional<T> get_number(const json& j, const std::string& key, Diagnostics& d) {
    if (!j.contains(key)) return std::nullopt;
    const auto& v = j.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() && !v.is_number_unsigned()) {
            d.add(key + ": expected an integer");
            return std::nullopt;
        }
        if (v.is_number_integer() && v.get<long long>() < 0) {
            d.add(key + ": must be non-negative");
            return std::nullopt;
        }
        return v.get<T>();
    } else {
        if (!v.is_number()) {
            d.add(key + ": expected a number");
            return std::nullopt;
        }
        return v.get<T>();
    }
}

inline double num(const json& j, const std::string& key, double fallback, const std::string& where, Diagnostics& d) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) {
        d.add(where + "." + key + ": expected a number");
        return fallback;
    }
    return j.at(key).get<double>();
}

inline void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where, Diagnostics& d) {
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (const char* c : keys) ok = ok || k == c;
        if (!ok) d.add(where + "." + k + ": unknown key");
    }
}

inline std::optional<ErrorDist> parse_error_dist(const json& j, const std::string& where, Diagnostics& d) {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        d.add(where + ".type: expected one of normal, student_t, mixture");
        return std::nullopt;
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "normal") {
        check_keys(j, {"type"}, where, d);
        return StdNormal{};
    }
    if (type == "student_t") {
        check_keys(j, {"type", "nu", "standardized"}, where, d);
        StudentT t;
        t.nu = num(j, "nu", t.nu, where, d);
        if (j.contains("standardized")) {
            if (!j.at("standardized").is_boolean()) d.add(where + ".standardized: expected true/false");
            else t.standardized = j.at("standardized").get<bool>();
        }
        return t;
    }
    if (type == "mixture") {
        check_keys(j, {"type", "p", "mu1", "sigma1", "mu2", "sigma2"}, where, d);
        NormalMixture m;
        m.p = num(j, "p", m.p, where, d);
        m.mu1 = num(j, "mu1", m.mu1, where, d);
        m.sigma1 = num(j, "sigma1", m.sigma1, where, d);
        m.mu2 = num(j, "mu2", m.mu2, where, d);
        m.sigma2 = num(j, "sigma2", m.sigma2, where, d);
        return m;
    }
    d.add(where + ".type: unknown error law '" + type + "'");
    return std::nullopt;
}

inline json error_dist_json(const ErrorDist& e) {
    return std::visit(overloaded{[](const StdNormal&) { return json{{"type", "normal"}}; },
                                 [](const StudentT& t) {
                                     return json{{"type", "student_t"}, {"nu", t.nu}, {"standardized", t.standardized}};
                                 },
                                 [](const NormalMixture& m) {
                                     return json{{"type", "mixture"}, {"p", m.p},         {"mu1", m.mu1},
                                                 {"sigma1", m.sigma1}, {"mu2", m.mu2}, {"sigma2", m.sigma2}};
                                 }},
                      e);
}

inline std::optional<DgpSpec> parse_dgp(const json& j, Diagnostics& d) {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        d.add("dgp.type: expected one of gaussian_arch1, garch_t, arma11");
        return std::nullopt;
    }
    DgpSpec spec;
    if (j.contains("burn_in")) {
        if (!j.at("burn_in").is_number_unsigned() && !(j.at("burn_in").is_number_integer() && j.at("burn_in").get<long long>() >= 0)) {
            d.add("dgp.burn_in: expected a non-negative integer");
        } else {
            spec.burn_in = j.at("burn_in").get<std::size_t>();
        }
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "gaussian_arch1") {
        check_keys(j, {"type", "burn_in", "c", "a"}, "dgp", d);
        GaussianArch1 g;
        g.c = num(j, "c", g.c, "dgp", d);
        g.a = num(j, "a", g.a, "dgp", d);
        spec.process = g;
    } else if (type == "garch_t") {
        check_keys(j, {"type", "burn_in", "c", "a", "b", "nu"}, "dgp", d);
        GarchT g;
        g.c = num(j, "c", g.c, "dgp", d);
        g.a = num(j, "a", g.a, "dgp", d);
        g.b = num(j, "b", g.b, "dgp", d);
        g.nu = num(j, "nu", g.nu, "dgp", d);
        spec.process = g;
    } else if (type == "arma11") {
        check_keys(j, {"type", "burn_in", "phi1", "phi2", "phi3", "error"}, "dgp", d);
        Arma11 a;
        a.phi1 = num(j, "phi1", a.phi1, "dgp", d);
        a.phi2 = num(j, "phi2", a.phi2, "dgp", d);
        a.phi3 = num(j, "phi3", a.phi3, "dgp", d);
        if (j.contains("error")) {
            auto e = parse_error_dist(j.at("error"), "dgp.error", d);
            if (!e) return std::nullopt;
            a.error = *e;
        }
        spec.process = a;
    } else {
        d.add("dgp.type: unknown process '" + type + "'");
        return std::nullopt;
    }
    try {
        validate(spec);
    } catch (const Error& e) {
        d.add(std::string("dgp: ") + e.what());
        return std::nullopt;
    }
    return spec;
}

inline json dgp_json(const DgpSpec& s) {
    json j = std::visit(overloaded{[](const GaussianArch1& g) { return json{{"type", "gaussian_arch1"}, {"c", g.c}, {"a", g.a}}; },
                                   [](const GarchT& g) {
                                       return json{{"type", "garch_t"}, {"c", g.c}, {"a", g.a}, {"b", g.b}, {"nu", g.nu}};
                                   },
                                   [](const Arma11& a) {
                                       return json{{"type", "arma11"},
                                                   {"phi1", a.phi1},
                                                   {"phi2", a.phi2},
                                                   {"phi3", a.phi3},
                                                   {"error", error_dist_json(a.error)}};
                                   }},
                        s.process);
    j["burn_in"] = s.burn_in;
    return j;
}

inline std::vector<RuleId> parse_rules(const json& root, const std::string& key, std::vector<RuleId> fallback,
                                       Diagnostics& d) {
    if (!root.contains(key)) return fallback;
    const auto& j = root.at(key);
    if (!j.is_array() || j.empty()) {
        d.add(key + ": expected a non-empty array of rule identifiers");
        return fallback;
    }
    std::vector<RuleId> out;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const auto where = key + "[" + std::to_string(k) + "]";
        if (!j[k].is_string()) {
            d.add(where + ": expected a string");
            continue;
        }
        const auto s = j[k].get<std::string>();
        auto r = parse_rule(s);
        if (!r) {
            d.add(where + ": unknown rule '" + s + "'");
            continue;
        }
        if (std::find(out.begin(), out.end(), *r) != out.end()) {
            d.add(where + ": duplicate rule '" + s + "'");
            continue;
        }
        out.push_back(*r);
    }
    return out;
}

inline json rules_json(const std::vector<RuleId>& rs) {
    json a = json::array();
    for (const auto& r : rs) a.push_back(to_string(r));
    return a;
}

inline bool needs_data(ExperimentKind k) { return k != ExperimentKind::summarize && k != ExperimentKind::empirical; }

}  // namespace detail

/// Parses and validates without running anything. Relative input paths are
/// resolved against `base_dir`. Returns the config and every problem found.
inline std::pair<ExperimentConfig, Diagnostics> parse_config(const nlohmann::json& raw,
                                                             const std::filesystem::path& base_dir = {}) {
    using detail::json;
    Diagnostics d;
    ExperimentConfig c;
    // A run manifest carries the normalized config under "config".
    const json& j = (raw.is_object() && raw.contains("config") && raw.contains("version")) ? raw.at("config") : raw;
    if (!j.is_object()) {
        d.add("config: expected a JSON object");
        return {c, d};
    }
    for (const auto& [k, _] : j.items()) {
        if (!detail::known_keys().count(k)) d.add(k + ": unknown key");
    }
    if (!j.contains("experiment") || !j.at("experiment").is_string()) {
        d.add("experiment: required, one of simulate, single_model, pool, empirical, gw, tau_star, score_density, "
              "summarize");
        return {c, d};
    }
    const auto kind = parse_kind(j.at("experiment").get<std::string>());
    if (!kind) {
        d.add("experiment: unknown kind '" + j.at("experiment").get<std::string>() + "'");
        return {c, d};
    }
    c.kind = *kind;
    const bool empirical = c.kind == ExperimentKind::empirical;

    if (auto v = detail::get_number<std::uint64_t>(j, "seed", d)) c.seed = *v;
    if (empirical) {
        c.est_start = 1500;
        c.refit_every = 50;
    }
    if (auto v = detail::get_number<std::size_t>(j, "T", d)) c.T = *v;
    if (auto v = detail::get_number<std::size_t>(j, "est_start", d)) c.est_start = *v;
    if (auto v = detail::get_number<std::size_t>(j, "J", d)) c.J = *v;
    if (auto v = detail::get_number<std::size_t>(j, "zeta", d)) c.zeta = *v;
    if (auto v = detail::get_number<std::size_t>(j, "tau", d)) c.tau = *v;
    if (auto v = detail::get_number<std::size_t>(j, "refit_every", d)) c.refit_every = *v;
    if (auto v = detail::get_number<std::size_t>(j, "M", d)) c.M = *v;
    if (auto v = detail::get_number<unsigned>(j, "threads", d)) c.threads = *v;
    if (auto v = detail::get_number<double>(j, "alpha", d)) c.alpha = *v;
    if (j.contains("per_step")) {
        if (!j.at("per_step").is_boolean()) d.add("per_step: expected true/false");
        else c.per_step = j.at("per_step").get<bool>();
    }
    if (j.contains("window")) {
        const auto& w = j.at("window");
        if (w == "expanding") c.window = WindowKind::expanding;
        else if (w == "rolling") c.window = WindowKind::rolling;
        else d.add("window: expected \"expanding\" or \"rolling\"");
    }
    if (j.contains("protocol")) {
        const auto& p = j.at("protocol");
        if (p == "single_model" || p == "pool" || p == "differences") c.protocol = p.get<std::string>();
        else d.add("protocol: expected \"single_model\", \"pool\" or \"differences\"");
    }

    if (j.contains("dgp")) c.dgp = detail::parse_dgp(j.at("dgp"), d);
    if (j.contains("input")) {
        const auto& in = j.at("input");
        if (!in.is_object() || !in.contains("path") || !in.at("path").is_string()) {
            d.add("input.path: required string");
        } else {
            detail::check_keys(in, {"path", "prices", "column"}, "input", d);
            InputSpec s;
            std::filesystem::path p = in.at("path").get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            s.path = p.lexically_normal().string();
            if (in.contains("prices")) {
                if (!in.at("prices").is_boolean()) d.add("input.prices: expected true/false");
                else s.prices = in.at("prices").get<bool>();
            }
            if (in.contains("column")) {
                if (!in.at("column").is_string()) d.add("input.column: expected a string");
                else s.column = in.at("column").get<std::string>();
            }
            if (!std::filesystem::exists(s.path)) d.add("input.path: file not found: " + s.path);
            c.input = s;
        }
    }

    if (j.contains("model")) {
        if (!j.at("model").is_string() || !parse_family(j.at("model").get<std::string>())) {
            d.add("model: unknown family " + j.at("model").dump());
        } else {
            c.model = *parse_family(j.at("model").get<std::string>());
        }
    }
    if (empirical) c.families = {ModelFamily::iid_normal, ModelFamily::garch11};
    if (c.kind == ExperimentKind::pool || (c.protocol == "pool" && !empirical)) {
        c.families = {ModelFamily::iid_normal, ModelFamily::ar1_normal, ModelFamily::ma1_normal};
    }
    if (j.contains("families")) {
        const auto& f = j.at("families");
        if (!f.is_array() || f.empty()) {
            d.add("families: expected a non-empty array of family names");
        } else {
            c.families.clear();
            for (std::size_t k = 0; k < f.size(); ++k) {
                const auto fam = f[k].is_string() ? parse_family(f[k].get<std::string>()) : std::nullopt;
                if (!fam) d.add("families[" + std::to_string(k) + "]: unknown family " + f[k].dump());
                else c.families.push_back(*fam);
            }
        }
    }

    const auto default_rules = empirical ? empirical_rules() : simulation_rules();
    c.optimizer_rules = detail::parse_rules(j, "optimizer_rules", default_rules, d);
    c.evaluation_rules = detail::parse_rules(j, "evaluation_rules", c.optimizer_rules, d);

    // Cross-field checks.
    const bool uses_pool = c.kind == ExperimentKind::pool ||
                           ((c.kind == ExperimentKind::gw || c.kind == ExperimentKind::tau_star) && c.protocol == "pool");
    const bool from_differences =
        (c.kind == ExperimentKind::gw || c.kind == ExperimentKind::tau_star) && c.protocol == "differences";
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) d.add("alpha: must lie in (0,1)");
    if (c.refit_every == 0) d.add("refit_every: must be >= 1");
    if (c.zeta == 0) d.add("zeta: must be >= 1");
    if (c.J == 0) d.add("J: must be >= 1");
    if (c.M == 0) d.add("M: must be >= 1");
    if (c.tau && *c.tau == 0) d.add("tau: must be >= 1");
    if (c.dgp && c.input) d.add("input: give either dgp or input, not both");
    if (c.kind == ExperimentKind::simulate && !c.dgp) d.add("dgp: required for simulate");
    if ((c.kind == ExperimentKind::summarize || empirical || from_differences) && !c.input) {
        d.add("input: required for " + j.at("experiment").get<std::string>());
    }
    if (detail::needs_data(c.kind) && !from_differences && !c.dgp && !c.input) d.add("dgp: give a dgp or an input file");
    if (c.dgp && c.T == 0) d.add("T: required (> 0) when simulating");
    if (c.dgp && c.T > 0) {
        if (c.kind == ExperimentKind::single_model || ((c.kind == ExperimentKind::gw || c.kind == ExperimentKind::tau_star) && !uses_pool && !from_differences)) {
            if (c.T <= c.est_start) d.add("est_start: must be < T");
            if (c.est_start < 30) d.add("est_start: must be >= 30");
        }
        if (uses_pool && c.T <= c.J + c.zeta) d.add("zeta: zeta > T - J leaves no out-of-sample step");
        if (c.kind == ExperimentKind::score_density && c.T < 30) d.add("T: score_density needs T >= 30");
    }
    if (uses_pool) {
        if (c.families.empty()) d.add("families: pool needs at least one family");
        if (c.J < 30) d.add("J: must be >= 30");
    }
    if (empirical) {
        if (c.families.size() < 2) d.add("families: empirical pipeline needs at least two families");
        if (c.est_start <= c.zeta) d.add("zeta: must be < est_start (pool window J = est_start - zeta)");
        if (c.est_start < 30) d.add("est_start: must be >= 30");
    }
    if ((c.kind == ExperimentKind::gw || c.kind == ExperimentKind::tau_star) && !from_differences) {
        for (const auto& r : c.evaluation_rules) {
            if (std::find(c.optimizer_rules.begin(), c.optimizer_rules.end(), r) == c.optimizer_rules.end()) {
                d.add("evaluation_rules: '" + to_string(r) + "' has no matching optimizer rule");
            }
        }
    }

    json e;
    e["experiment"] = j.at("experiment");
    e["seed"] = c.seed;
    if (c.dgp) e["dgp"] = detail::dgp_json(*c.dgp);
    if (c.input) {
        e["input"] = {{"path", std::filesystem::absolute(c.input->path).lexically_normal().string()},
                      {"prices", c.input->prices}};
        if (c.input->column) e["input"]["column"] = *c.input->column;
    }
    e["model"] = std::string(family_name(c.model));
    json fams = json::array();
    for (auto f : c.families) fams.push_back(std::string(family_name(f)));
    if (!fams.empty()) e["families"] = fams;
    e["optimizer_rules"] = detail::rules_json(c.optimizer_rules);
    e["evaluation_rules"] = detail::rules_json(c.evaluation_rules);
    e["T"] = c.T;
    e["est_start"] = c.est_start;
    e["J"] = c.J;
    e["zeta"] = c.zeta;
    if (c.tau) e["tau"] = *c.tau;
    e["refit_every"] = c.refit_every;
    e["window"] = c.window == WindowKind::expanding ? "expanding" : "rolling";
    e["protocol"] = c.protocol;
    e["M"] = c.M;
    e["alpha"] = c.alpha;
    e["threads"] = c.threads;
    e["per_step"] = c.per_step;
    c.echo = e;
    return {c, d};
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read config " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config " + path.string() + " is not valid JSON: " + e.what());
    }
}

inline Diagnostics validate_config_file(const std::filesystem::path& path) {
    const auto raw = read_json_file(path);
    return parse_config(raw, std::filesystem::absolute(path).parent_path()).second;
}

// ---------------------------------------------------------------------------
// Runner.

struct RunCounters {
    std::size_t refits = 0;
    std::size_t fallbacks = 0;
    std::size_t clipped_fits = 0;
    std::size_t non_identified_fits = 0;
    std::size_t floored_scores = 0;
    std::size_t clipped_draws = 0;
};

struct RunResult {
    std::vector<std::string> outputs;
    RunCounters counters;
};

namespace detail {

class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    std::vector<std::string> commit() const {
        std::filesystem::create_directories(dir_);
        std::vector<std::string> names;
        for (const auto& [name, content] : files_) {
            atomic_write(dir_ / name, content);
            names.push_back(name);
        }
        return names;
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

inline std::string rule_slug(const RuleId& r) {
    std::string s = to_string(r);
    for (auto& ch : s) {
        if (ch == '@' || ch == ':' || ch == '.') ch = '_';
    }
    return s;
}

inline void tally(const ScoreMatrix& m, RunCounters& c) {
    for (const auto& d : m.diagnostics) {
        c.refits += d.refits;
        c.fallbacks += d.fallbacks;
        c.clipped_fits += d.clipped;
        c.non_identified_fits += d.non_identified;
    }
    for (const auto& row : m.floored) {
        for (auto f : row) c.floored_scores += f;
    }
}

inline std::string per_step_csv(const ScoreMatrix& m) {
    std::ostringstream os;
    os << "optimizer,evaluation,t,score\n";
    char buf[40];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            for (std::size_t t = 0; t < m.per_step[i][j].size(); ++t) {
                std::snprintf(buf, sizeof buf, "%.17g", m.per_step[i][j][t]);
                os << to_string(m.optimizer_rules[i]) << ',' << to_string(m.evaluation_rules[j]) << ',' << t << ','
                   << buf << '\n';
            }
        }
    }
    return os.str();
}

inline void emit_matrix(OutputSet& out, const ScoreMatrix& m, const std::string& stem, bool per_step) {
    out.add(stem + ".csv", render_table(m, TableFormat::csv));
    out.add(stem + ".md", render_table(m, TableFormat::markdown));
    out.add(stem + ".txt", render_table(m, TableFormat::text));
    bool square = true;
    for (const auto& r : m.evaluation_rules) square = square && m.row_of(r).has_value();
    if (square) out.add(stem + "_verdict.csv", render_verdict_csv(coherence_verdict(m)));
    if (per_step) out.add(stem + "_per_step.csv", per_step_csv(m));
}

inline ReturnSeries load_input(const InputSpec& in) {
    return load_returns_csv(in.path, CsvOptions{in.prices, in.column});
}

inline ReturnSeries data_for(const ExperimentConfig& c) {
    if (c.input) return load_input(*c.input);
    return simulate(*c.dgp, c.T, c.seed);
}

inline ExperimentOptions options_for(const ExperimentConfig& c) {
    ExperimentOptions o;
    o.refit_every = c.refit_every;
    o.window.kind = c.window;
    o.threads = c.threads;
    o.seed = c.seed;
    o.tau = c.tau;
    return o;
}

inline ScoreMatrix run_protocol(const ExperimentConfig& c, const ReturnSeries& data, bool pool) {
    const auto o = options_for(c);
    if (pool) return pool_experiment(data, c.families, c.optimizer_rules, c.evaluation_rules, c.J, c.zeta, o);
    return single_model_experiment(data, c.model, c.optimizer_rules, c.evaluation_rules, c.est_start, o);
}

inline std::string gw_csv_header() { return "evaluation_rule,optimal_rule,competitor_rule,tau,mean_diff,var_diff,z,p_value\n"; }

inline std::string gw_csv_row(const std::string& j, const std::string& a, const std::string& b, const GwResult& g) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", g.tau, g.mean, g.variance, g.z, g.p_value);
    return j + ',' + a + ',' + b + ',' + buf + '\n';
}

}  // namespace detail

/// Runs a validated configuration and writes every output plus manifest.json
/// into `out_dir`. Files are written only after the experiment finishes.
inline RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    detail::OutputSet out(out_dir);
    RunResult res;
    auto& cnt = res.counters;

    switch (c.kind) {
        case ExperimentKind::simulate: {
            out.add("series.csv", render_series_csv(simulate(*c.dgp, c.T, c.seed)));
            break;
        }
        case ExperimentKind::summarize: {
            const auto s = detail::load_input(*c.input);
            out.add("summary.csv", render_summary_csv(summarize(s.values())));
            break;
        }
        case ExperimentKind::single_model:
        case ExperimentKind::pool: {
            const auto data = detail::data_for(c);
            const auto m = detail::run_protocol(c, data, c.kind == ExperimentKind::pool);
            detail::tally(m, cnt);
            detail::emit_matrix(out, m, "score_matrix", c.per_step);
            break;
        }
        case ExperimentKind::empirical: {
            const auto data = detail::load_input(*c.input);
            out.add("summary.csv", render_summary_csv(summarize(data.values())));
            auto o = detail::options_for(c);
            for (auto f : c.families) {
                const auto m = single_model_experiment(data, f, c.optimizer_rules, c.evaluation_rules, c.est_start, o);
                detail::tally(m, cnt);
                detail::emit_matrix(out, m, "score_matrix_" + std::string(family_name(f)), c.per_step);
            }
            // Pool targets line up with the single-model targets: J + zeta = est_start.
            const auto m = pool_experiment(data, c.families, c.optimizer_rules, c.evaluation_rules,
                                           c.est_start - c.zeta, c.zeta, o);
            detail::tally(m, cnt);
            detail::emit_matrix(out, m, "score_matrix_pool", c.per_step);
            break;
        }
        case ExperimentKind::gw:
        case ExperimentKind::tau_star: {
            const bool gw = c.kind == ExperimentKind::gw;
            if (c.protocol == "differences") {
                const auto delta = detail::load_input(*c.input);
                if (gw) {
                    out.add("gw.csv", detail::gw_csv_header() + detail::gw_csv_row("-", "-", "-", gw_statistic(delta.values())));
                } else {
                    out.add("tau_star.csv", render_tau_star_csv(tau_star_curve(delta.values(), c.alpha)));
                }
                break;
            }
            const auto data = detail::data_for(c);
            const auto m = detail::run_protocol(c, data, c.protocol == "pool");
            detail::tally(m, cnt);
            detail::emit_matrix(out, m, "score_matrix", c.per_step);
            std::string table = detail::gw_csv_header();
            for (std::size_t j = 0; j < m.cols(); ++j) {
                const auto star = *m.row_of(m.evaluation_rules[j]);
                for (std::size_t i = 0; i < m.rows(); ++i) {
                    const auto delta = m.differences(j, star, i);
                    const auto js = to_string(m.evaluation_rules[j]);
                    const auto is = to_string(m.optimizer_rules[i]);
                    if (gw) {
                        if (i != star) table += detail::gw_csv_row(js, js, is, gw_statistic(delta));
                    } else {
                        out.add("tau_star_" + detail::rule_slug(m.evaluation_rules[j]) + "__" +
                                    detail::rule_slug(m.optimizer_rules[i]) + ".csv",
                                render_tau_star_csv(tau_star_curve(delta, c.alpha)));
                    }
                }
            }
            if (gw) out.add("gw.csv", table);
            break;
        }
        case ExperimentKind::score_density: {
            const auto data = detail::data_for(c);
            const auto y = data.values();
            std::vector<std::vector<double>> theta;
            std::vector<Eigen::MatrixXd> V;
            std::ostringstream est;
            est << "optimizer_rule,parameter,estimate,v_unconstrained_diag,pseudo_inverse\n";
            OptimizerOptions opt;
            for (std::size_t i = 0; i < c.optimizer_rules.size(); ++i) {
                const auto rule = resolve(c.optimizer_rules[i], y);
                opt.seed = detail::fit_seed(c.seed, i, 0, 0);
                const auto rep = optimal_score_estimate(c.model, y, rule, default_initial_parameters(c.model, y), opt);
                if (rep.clipped) ++cnt.clipped_fits;
                if (rep.non_identified) ++cnt.non_identified_fits;
                ++cnt.refits;
                const auto sw = sandwich_covariance(c.model, rep.argmax, y, rule);
                for (std::size_t k = 0; k < rep.argmax.size(); ++k) {
                    char buf[96];
                    std::snprintf(buf, sizeof buf, "%.17g,%.17g", rep.argmax[k],
                                  sw.V(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
                    est << to_string(c.optimizer_rules[i]) << ",theta" << (k + 1) << ',' << buf << ','
                        << (sw.pseudo_inverse ? 1 : 0) << '\n';
                }
                theta.push_back(rep.argmax);
                V.push_back(sw.V);
            }
            const auto sims = score_density_simulation(c.model, c.optimizer_rules, theta, V, y, c.evaluation_rules,
                                                       c.M, c.seed);
            cnt.clipped_draws += sims.clipped_draws;
            out.add("estimates.csv", est.str());
            out.add("score_density_draws.csv", render_draws_csv(sims));
            out.add("score_density.csv", render_density_csv(sims));
            break;
        }
    }

    res.outputs = out.commit();
    nlohmann::json manifest;
    manifest["tool"] = "optscore";
    manifest["version"] = kVersion;
    manifest["seed"] = c.seed;
    manifest["config"] = c.echo;
    manifest["outputs"] = res.outputs;
    manifest["counters"] = {{"refits", cnt.refits},
                            {"fallbacks", cnt.fallbacks},
                            {"clipped_fits", cnt.clipped_fits},
                            {"non_identified_fits", cnt.non_identified_fits},
                            {"floored_scores", cnt.floored_scores},
                            {"clipped_draws", cnt.clipped_draws}};
    manifest["notes"] = {{"cls_thresholds", "type-7 empirical quantiles of each estimation window, held until the next refit"},
                         {"log_floor", "densities and tail masses below 1e-300 score log(1e-300)"}};
    atomic_write(out_dir / "manifest.json", manifest.dump(2) + "\n");
    res.outputs.push_back("manifest.json");
    return res;
}

}  // namespace optscore
