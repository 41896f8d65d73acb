// Copyright 2026 The bqpe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bqpe/codes.hpp"
#include "bqpe/crt.hpp"
#include "bqpe/gkp.hpp"
#include "bqpe/metrics.hpp"
#include "bqpe/noise.hpp"
#include "bqpe/noisy.hpp"
#include "bqpe/parallel.hpp"
#include "bqpe/qpe.hpp"
#include "json.hpp"

namespace bqpe {

using json = nlohmann::json;

inline constexpr int config_schema_version = 1;
inline constexpr const char *library_version = "0.1.0";
inline constexpr const char *output_root_env = "BQPE_OUTPUT_ROOT";

struct ExperimentInfo {
    const char *name;
    const char *figure;
    const char *description;
};

/// Registry in the order printed by list-experiments.
inline const std::array<ExperimentInfo, 6> &experiment_registry() {
    static const std::array<ExperimentInfo, 6> r{{
        {"detect-rotation", "syndrome histogram and Wigner map of a lossy rotation code",
         "Adaptive QPE loss detection on a cat or binomial code"},
        {"detect-gkp", "GKP outcome fidelity map with quadrature marginals",
         "Dual-quadrature displacement detection on a finite-energy GKP state"},
        {"prepare-code", "photon populations and Wigner map of a prepared codeword",
         "Codeword preparation by post-selecting the all-zero trajectory"},
        {"fock-generate", "staged CRT histograms and post-selected Fock populations",
         "Large Fock state detection and generation with coprime moduli"},
        {"infidelity-scan", "total detection infidelity against round count",
         "Deduction plus relaxation infidelity over (N, m) for lossy cat inputs"},
        {"heisenberg-scan", "deduction infidelity against total evolution time on log axes",
         "Noiseless deduction infidelity and its log-log slope against t_tot"},
    }};
    return r;
}

inline bool known_experiment(const std::string &name) {
    for (const auto &e : experiment_registry()) {
        if (name == e.name) {
            return true;
        }
    }
    return false;
}

enum class FieldType { integer, number, boolean, string, int_array, string_array };

struct FieldRule {
    const char *section;
    const char *key;
    FieldType type;
};

/// Every key a version-1 config may carry. Sections are optional objects.
inline const std::vector<FieldRule> &config_fields() {
    static const std::vector<FieldRule> f{
        {"", "schema_version", FieldType::integer},
        {"", "experiment", FieldType::string},
        {"", "name", FieldType::string},
        {"", "description", FieldType::string},
        {"", "extended", FieldType::boolean},
        {"code", "family", FieldType::string},
        {"code", "N", FieldType::integer},
        {"code", "alpha", FieldType::number},
        {"code", "K", FieldType::integer},
        {"code", "mu", FieldType::integer},
        {"code", "logical", FieldType::string},
        {"code", "delta", FieldType::number},
        {"code", "k_range", FieldType::integer},
        {"code", "dim", FieldType::integer},
        {"code", "target", FieldType::integer},
        {"error", "loss_gamma", FieldType::number},
        {"error", "loss_chi", FieldType::number},
        {"error", "displacement_x", FieldType::number},
        {"error", "displacement_p", FieldType::number},
        {"schedule", "m", FieldType::integer},
        {"schedule", "moduli", FieldType::int_array},
        {"schedule", "N_values", FieldType::int_array},
        {"schedule", "m_values", FieldType::int_array},
        {"schedule", "xi", FieldType::number},
        {"noise", "model", FieldType::string},
        {"noise", "chi_mhz", FieldType::number},
        {"noise", "g_mhz", FieldType::number},
        {"noise", "gamma1_per_us", FieldType::number},
        {"noise", "gamma2_per_us", FieldType::number},
        {"noise", "integrator", FieldType::string},
        {"noise", "substeps", FieldType::integer},
        {"sampling", "samples", FieldType::integer},
        {"sampling", "seed", FieldType::integer},
        {"sampling", "max_attempts", FieldType::integer},
        {"sampling", "detections", FieldType::integer},
        {"output", "directory", FieldType::string},
        {"output", "formats", FieldType::string_array},
        {"output", "wigner_extent", FieldType::number},
        {"output", "wigner_points", FieldType::integer},
    };
    return f;
}

inline const char *field_type_name(FieldType t) {
    switch (t) {
        case FieldType::integer:
            return "integer";
        case FieldType::number:
            return "number";
        case FieldType::boolean:
            return "boolean";
        case FieldType::string:
            return "string";
        case FieldType::int_array:
            return "array of integers";
        case FieldType::string_array:
            return "array of strings";
    }
    return "value";
}

inline bool field_matches(const json &v, FieldType t) {
    switch (t) {
        case FieldType::integer:
            return v.is_number_integer();
        case FieldType::number:
            return v.is_number();
        case FieldType::boolean:
            return v.is_boolean();
        case FieldType::string:
            return v.is_string();
        case FieldType::int_array:
            if (!v.is_array()) {
                return false;
            }
            for (const auto &e : v) {
                if (!e.is_number_integer()) {
                    return false;
                }
            }
            return true;
        case FieldType::string_array:
            if (!v.is_array()) {
                return false;
            }
            for (const auto &e : v) {
                if (!e.is_string()) {
                    return false;
                }
            }
            return true;
    }
    return false;
}

/// Structural validation: known sections and keys, value types, and the
/// required top-level fields.
inline void validate_config_schema(const json &j) {
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    const auto &rules = config_fields();
    auto rule_for = [&](const std::string &section, const std::string &key) -> const FieldRule * {
        for (const auto &r : rules) {
            if (section == r.section && key == r.key) {
                return &r;
            }
        }
        return nullptr;
    };
    static const std::vector<std::string> sections{"code", "error", "schedule", "noise", "sampling", "output"};
    for (const auto &[key, value] : j.items()) {
        bool is_section = std::find(sections.begin(), sections.end(), key) != sections.end();
        if (is_section) {
            if (!value.is_object()) {
                throw ConfigError("section '" + key + "' must be an object");
            }
            for (const auto &[k2, v2] : value.items()) {
                const FieldRule *r = rule_for(key, k2);
                if (!r) {
                    throw ConfigError("unknown key '" + key + "." + k2 + "'");
                }
                if (!field_matches(v2, r->type)) {
                    throw ConfigError("'" + key + "." + k2 + "' must be " + field_type_name(r->type));
                }
            }
            continue;
        }
        const FieldRule *r = rule_for("", key);
        if (!r) {
            throw ConfigError("unknown key '" + key + "'");
        }
        if (!field_matches(value, r->type)) {
            throw ConfigError("'" + key + "' must be " + field_type_name(r->type));
        }
    }
    for (const char *req : {"schema_version", "experiment", "name"}) {
        if (!j.contains(req)) {
            throw ConfigError(std::string("missing required key '") + req + "'");
        }
    }
    if (j["schema_version"].get<int>() != config_schema_version) {
        throw ConfigError("unsupported schema_version " + j["schema_version"].dump() + " (expected " +
                          std::to_string(config_schema_version) + ")");
    }
    if (!known_experiment(j["experiment"].get<std::string>())) {
        throw ConfigError("unknown experiment '" + j["experiment"].get<std::string>() + "'");
    }
}

/// A schema-checked config with typed lookups.
class ExperimentConfig {
   public:
    static ExperimentConfig parse(const json &j) {
        validate_config_schema(j);
        ExperimentConfig c;
        c.raw_ = j;
        c.check_semantics();
        return c;
    }
    static ExperimentConfig parse_text(const std::string &text) {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error &e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        return parse(j);
    }
    static ExperimentConfig load(const std::filesystem::path &path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot read config '" + path.string() + "'");
        }
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str());
    }

    const json &raw() const noexcept {
        return raw_;
    }
    std::string experiment() const {
        return raw_["experiment"].get<std::string>();
    }
    std::string name() const {
        return raw_["name"].get<std::string>();
    }
    bool extended() const {
        return raw_.value("extended", false);
    }
    bool has(const char *section, const char *key) const {
        return raw_.contains(section) && raw_[section].contains(key);
    }
    template <typename T>
    T get(const char *section, const char *key, T fallback) const {
        return has(section, key) ? raw_[section][key].get<T>() : fallback;
    }
    template <typename T>
    T require(const char *section, const char *key) const {
        if (!has(section, key)) {
            throw ConfigError(experiment() + " needs '" + section + "." + key + "'");
        }
        return raw_[section][key].get<T>();
    }
    std::uint64_t seed() const {
        return get<std::uint64_t>("sampling", "seed", 1);
    }
    void set_seed(std::uint64_t s) {
        raw_["sampling"]["seed"] = s;
    }
    bool noisy() const {
        return get<std::string>("noise", "model", "off") == "hardware";
    }
    /// Table units: MHz for chi/2pi and g/2pi, 1/us for the rates.
    HardwareParams hardware() const {
        HardwareParams d;
        return HardwareParams::from_table(get<double>("noise", "chi_mhz", d.chi / (2.0 * pi)),
                                          get<double>("noise", "g_mhz", d.g / (2.0 * pi)),
                                          get<double>("noise", "gamma1_per_us", d.gamma1),
                                          get<double>("noise", "gamma2_per_us", d.gamma2));
    }
    NoisyOptions noisy_options() const {
        NoisyOptions o;
        o.integrator = get<std::string>("noise", "integrator", "exact") == "rk4" ? NoisyIntegrator::rk4
                                                                               : NoisyIntegrator::exact;
        o.substeps = get<int>("noise", "substeps", o.substeps);
        return o;
    }
    std::vector<std::string> formats() const {
        std::vector<std::string> def{"histogram", "wigner", "summary"};
        if (experiment() == "infidelity-scan" || experiment() == "heisenberg-scan") {
            def = {"histogram", "scan", "summary"};
        }
        return get<std::vector<std::string>>("output", "formats", def);
    }
    bool wants(const std::string &format) const {
        auto f = formats();
        return std::find(f.begin(), f.end(), format) != f.end();
    }

   private:
    void check_semantics() const {
        auto one_of = [&](const char *section, const char *key, std::initializer_list<const char *> allowed) {
            if (!has(section, key)) {
                return;
            }
            std::string v = raw_[section][key].get<std::string>();
            for (const char *a : allowed) {
                if (v == a) {
                    return;
                }
            }
            throw ConfigError("'" + std::string(section) + "." + key + "' has unsupported value '" + v + "'");
        };
        auto positive = [&](const char *section, const char *key) {
            if (has(section, key) && !(raw_[section][key].get<double>() > 0.0)) {
                throw ConfigError("'" + std::string(section) + "." + key + "' must be positive");
            }
        };
        auto non_negative = [&](const char *section, const char *key) {
            if (has(section, key) && raw_[section][key].get<double>() < 0.0) {
                throw ConfigError("'" + std::string(section) + "." + key + "' must be non-negative");
            }
        };
        one_of("code", "family", {"cat", "binomial", "gkp", "coherent"});
        one_of("code", "logical", {"zero", "one", "plus"});
        one_of("noise", "model", {"off", "hardware"});
        one_of("noise", "integrator", {"exact", "rk4"});
        for (const char *k : {"N", "K", "dim", "delta"}) {
            positive("code", k);
        }
        positive("noise", "substeps");
        positive("schedule", "m");
        positive("noise", "chi_mhz");
        positive("noise", "g_mhz");
        positive("sampling", "max_attempts");
        positive("sampling", "detections");
        positive("output", "wigner_extent");
        for (const char *k : {"gamma1_per_us", "gamma2_per_us"}) {
            non_negative("noise", k);
        }
        non_negative("code", "target");
        non_negative("sampling", "samples");
        non_negative("sampling", "seed");
        non_negative("error", "loss_chi");
        non_negative("schedule", "xi");
        if (has("code", "mu")) {
            int mu = raw_["code"]["mu"].get<int>();
            if (mu != 0 && mu != 1) {
                throw ConfigError("'code.mu' must be 0 or 1");
            }
        }
        if (has("error", "loss_gamma")) {
            double g = raw_["error"]["loss_gamma"].get<double>();
            if (!(g >= 0.0 && g < 1.0)) {
                throw ConfigError("'error.loss_gamma' must lie in [0, 1)");
            }
            if (has("error", "loss_chi")) {
                throw ConfigError("give at most one of 'error.loss_gamma' and 'error.loss_chi'");
            }
        }
        if (has("output", "wigner_points") && raw_["output"]["wigner_points"].get<int>() < 2) {
            throw ConfigError("'output.wigner_points' must be at least 2");
        }
        if (has("output", "formats")) {
            for (const auto &f : raw_["output"]["formats"]) {
                std::string s = f.get<std::string>();
                if (s != "histogram" && s != "wigner" && s != "summary" && s != "scan") {
                    throw ConfigError("unknown output format '" + s + "'");
                }
            }
        }
        for (const char *k : {"moduli", "N_values", "m_values"}) {
            if (has("schedule", k)) {
                auto v = raw_["schedule"][k].get<std::vector<int>>();
                if (v.empty()) {
                    throw ConfigError("'schedule." + std::string(k) + "' must not be empty");
                }
                for (int x : v) {
                    if (x < 1) {
                        throw ConfigError("'schedule." + std::string(k) + "' entries must be positive");
                    }
                }
            }
        }
    }

    json raw_;
};

// ---------------------------------------------------------------------------
// Result bundle

struct HistogramRow {
    double theta;
    double value;
    std::string label;
};

struct WignerTable {
    std::vector<std::pair<double, double>> grid;
    std::vector<double> values;
};

struct ScanTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

struct ResultBundle {
    json manifest;
    std::string value_column = "probability";
    std::vector<HistogramRow> histogram;
    std::optional<WignerTable> wigner;
    std::optional<ScanTable> scan;
    json summary;
};

/// 17 significant digits, enough to round-trip any binary64 value.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Human-facing output.
inline std::string format_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string histogram_csv(const ResultBundle &b) {
    std::string s = "theta," + b.value_column + ",label\n";
    for (const auto &r : b.histogram) {
        s += format_double(r.theta) + "," + format_double(r.value) + "," + r.label + "\n";
    }
    return s;
}

inline std::string wigner_csv(const WignerTable &w) {
    std::string s = "x,p,W\n";
    for (std::size_t i = 0; i < w.grid.size(); ++i) {
        s += format_double(w.grid[i].first) + "," + format_double(w.grid[i].second) + "," +
             format_double(w.values[i]) + "\n";
    }
    return s;
}

inline std::string scan_csv(const ScanTable &t) {
    std::string s;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        s += (i ? "," : "") + t.header[i];
    }
    s += "\n";
    for (const auto &row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            s += (i ? "," : "") + format_double(row[i]);
        }
        s += "\n";
    }
    return s;
}

inline std::filesystem::path output_root() {
    const char *env = std::getenv(output_root_env);
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("results");
}

inline std::filesystem::path output_directory(const ExperimentConfig &cfg) {
    return output_root() / cfg.get<std::string>("output", "directory", cfg.name());
}

inline void write_text(const std::filesystem::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) {
        throw Error("io", "cannot write '" + p.string() + "'", ExitCode::config);
    }
    out << text;
}

/// Writes manifest.json plus the requested formats; returns the files written.
inline std::vector<std::filesystem::path> write_bundle(const ResultBundle &b, const ExperimentConfig &cfg,
                                                       const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    auto put = [&](const char *name, const std::string &text) {
        write_text(dir / name, text);
        files.push_back(dir / name);
    };
    put("manifest.json", b.manifest.dump(2) + "\n");
    if (cfg.wants("histogram")) {
        put("histogram.csv", histogram_csv(b));
    }
    if (cfg.wants("wigner") && b.wigner) {
        put("wigner.csv", wigner_csv(*b.wigner));
    }
    if (cfg.wants("scan") && b.scan) {
        put("scan.csv", scan_csv(*b.scan));
    }
    if (cfg.wants("summary")) {
        put("summary.json", b.summary.dump(2) + "\n");
    }
    return files;
}

// ---------------------------------------------------------------------------
// Building blocks from config

inline RotationCodeSpec rotation_spec(const ExperimentConfig &cfg) {
    std::string family = cfg.require<std::string>("code", "family");
    int N = cfg.require<int>("code", "N");
    int mu = cfg.get<int>("code", "mu", 0);
    if (family == "cat") {
        double alpha = cfg.require<double>("code", "alpha");
        return RotationCodeSpec{N, CatFamily{alpha}, mu, FockDim(cfg.get<int>("code", "dim", default_cat_dim()))};
    }
    if (family == "binomial") {
        int K = cfg.require<int>("code", "K");
        return RotationCodeSpec{N, BinomialFamily{K}, mu,
                                FockDim(cfg.get<int>("code", "dim", default_binomial_dim(N, K)))};
    }
    throw ConfigError(cfg.experiment() + " needs a cat or binomial code, not '" + family + "'");
}

inline std::optional<LossChannel> loss_from(const ExperimentConfig &cfg) {
    if (cfg.has("error", "loss_gamma")) {
        return LossChannel::from_gamma(cfg.require<double>("error", "loss_gamma"));
    }
    if (cfg.has("error", "loss_chi")) {
        return LossChannel{cfg.require<double>("error", "loss_chi"), -1};
    }
    return std::nullopt;
}

inline QuantumState rotation_logical(const ExperimentConfig &cfg) {
    RotationCodeSpec spec = rotation_spec(cfg);
    std::string logical = cfg.get<std::string>("code", "logical", "plus");
    if (logical == "plus") {
        return logical_plus(spec);
    }
    spec.mu = logical == "one" ? 1 : 0;
    return code_state(spec);
}

inline WignerTable wigner_table(const QuantumState &s, const ExperimentConfig &cfg, int workers) {
    WignerTable w;
    w.grid = square_grid(cfg.get<double>("output", "wigner_extent", 6.0), cfg.get<int>("output", "wigner_points", 81));
    w.values.assign(w.grid.size(), 0.0);
    QuantumState rho = s.as_density();
    parallel_for(w.grid.size(), workers, [&](std::size_t i, int) { w.values[i] = wigner(rho, {w.grid[i]})[0]; });
    return w;
}

inline json schedule_json(const QpeSchedule &s) {
    return json{{"m", s.m()}, {"kappa_rad_per_us", s.kappa()}, {"t_i_us", s.times()}, {"t_tot_us", s.total_time()}};
}

inline json report_json(const InfidelityReport &r) {
    json bins = json::array();
    for (const auto &[l, b] : r.per_bin) {
        bins.push_back({{"l", l}, {"probability", b.probability}, {"mean_infidelity", b.mean_infidelity}});
    }
    return json{{"N", r.N},         {"m", r.m},
                {"t_tot_us", r.t_tot}, {"infidelity", r.total},
                {"standard_error", r.standard_error}, {"samples", r.samples},
                {"per_bin", bins}};
}

/// The schedules an experiment will run, without running it.
inline std::vector<std::pair<std::string, QpeSchedule>> planned_schedules(const ExperimentConfig &cfg) {
    std::vector<std::pair<std::string, QpeSchedule>> out;
    HardwareParams hw = cfg.hardware();
    std::string e = cfg.experiment();
    if (e == "detect-rotation") {
        int N = cfg.require<int>("code", "N");
        out.emplace_back("N=" + std::to_string(N), QpeSchedule::rotation(cfg.require<int>("schedule", "m"), N, hw.chi));
    } else if (e == "prepare-code") {
        int N = cfg.require<int>("code", "N");
        out.emplace_back("2N=" + std::to_string(2 * N),
                         QpeSchedule::preparation(cfg.require<int>("schedule", "m"), N, hw.chi));
    } else if (e == "detect-gkp") {
        int m = cfg.require<int>("schedule", "m");
        out.emplace_back("Q", QpeSchedule::quadrature(m, QuadratureAxis::Q, hw.g));
        out.emplace_back("P", QpeSchedule::quadrature(m, QuadratureAxis::P, hw.g));
    } else if (e == "fock-generate") {
        int m = cfg.require<int>("schedule", "m");
        for (int N : cfg.require<std::vector<int>>("schedule", "moduli")) {
            out.emplace_back("N=" + std::to_string(N), QpeSchedule::rotation(m, N, hw.chi));
        }
    } else {
        for (int N : cfg.require<std::vector<int>>("schedule", "N_values")) {
            for (int m : cfg.require<std::vector<int>>("schedule", "m_values")) {
                out.emplace_back("N=" + std::to_string(N) + " m=" + std::to_string(m),
                                 QpeSchedule::rotation(m, N, hw.chi));
            }
        }
    }
    return out;
}

inline std::string dry_run_text(const ExperimentConfig &cfg) {
    std::string s = cfg.name() + " (" + cfg.experiment() + ")\n";
    for (const auto &[label, sched] : planned_schedules(cfg)) {
        s += "  " + label + "  m=" + std::to_string(sched.m()) + "\n    t_i [us]:";
        for (double t : sched.times()) {
            s += " " + format_short(t);
        }
        s += "\n    t_tot [us]: " + format_short(sched.total_time()) + "\n";
    }
    return s;
}

// ---------------------------------------------------------------------------
// Experiments

struct RunContext {
    int workers = 1;
};

inline ResultBundle run_detect_rotation(const ExperimentConfig &cfg, const RunContext &ctx) {
    RotationCodeSpec spec = rotation_spec(cfg);
    QuantumState logical = rotation_logical(cfg);
    QuantumState input = logical;
    if (auto ch = loss_from(cfg)) {
        input = apply_loss(logical, *ch);
    }
    int N = spec.N;
    int m = cfg.require<int>("schedule", "m");
    HardwareParams hw = cfg.hardware();
    QpeSchedule sched = QpeSchedule::rotation(m, N, hw.chi);
    SpectralCoupling c = SpectralCoupling::rotation(N, input.dim());
    std::size_t samples = cfg.get<std::size_t>("sampling", "samples", 0);
    std::uint64_t seed = cfg.seed();
    std::size_t outcomes = std::size_t{1} << m;

    ResultBundle b;
    b.summary = {{"experiment", cfg.experiment()}, {"name", cfg.name()}, {"N", N}, {"m", m},
                 {"schedule", schedule_json(sched)}, {"noise", cfg.noisy() ? "hardware" : "off"}};
    std::vector<double> hist(outcomes, 0.0);
    std::optional<InfidelityReport> report;

    if (!cfg.noisy()) {
        OutcomeDistribution dist = outcome_distribution(input, sched);
        if (samples == 0) {
            hist = dist.p;
        } else {
            auto counts = sample_outcome_counts(input, c, m, samples, seed, ctx.workers);
            for (std::size_t j = 0; j < outcomes; ++j) {
                hist[j] = static_cast<double>(counts[j]);
            }
        }
        if (m <= 12) {
            report = deduction_report(input, N, m, hw.chi);
        }
        json masses = json::object();
        for (int l = 0; l < N; ++l) {
            double p = 0.0;
            for (std::size_t j = 0; j < outcomes; ++j) {
                if (rotation_bin(dist.theta(j), N) == l) {
                    p += dist.p[j];
                }
            }
            masses[std::to_string(l)] = p;
        }
        b.summary["bin_probabilities"] = masses;
    } else {
        LindbladModel model = default_hardware_model(CouplingKind::dispersive, input.dim(), hw);
        NoisyWindow window(sched, c, model, cfg.noisy_options());
        if (samples == 0) {
            auto br = enumerate_noisy_trajectories(input, window, false);
            for (std::size_t j = 0; j < outcomes; ++j) {
                hist[j] = br[j].probability;
            }
        } else {
            std::vector<std::uint64_t> idx(samples);
            parallel_for(samples, ctx.workers, [&](std::size_t k, int) {
                PhiloxStream rng(seed, k);
                idx[k] = dyadic_index(run_noisy_trajectory(input, window, rng).bits);
            });
            for (auto j : idx) {
                hist[j] += 1.0;
            }
        }
        if (samples > 0 || m <= 12) {
            report = total_infidelity_noisy(input, N, m, model, samples, seed, ctx.workers, cfg.noisy_options());
        }
    }
    if (samples > 0) {
        b.value_column = "count";
        b.summary["samples"] = samples;
        b.summary["seed"] = seed;
    }
    for (std::size_t j = 0; j < outcomes; ++j) {
        double theta = std::ldexp(static_cast<double>(j), -m);
        RotationError e = deduce_rotation_error(theta, N);
        b.histogram.push_back(
            {theta, hist[j], "l=" + std::to_string(e.residue) + ";loss=" + std::to_string(e.loss_count)});
    }
    if (report) {
        b.summary["detection"] = report_json(*report);
    }
    if (cfg.wants("wigner")) {
        b.wigner = wigner_table(input, cfg, ctx.workers);
    }
    return b;
}

inline ResultBundle run_detect_gkp(const ExperimentConfig &cfg, const RunContext &ctx) {
    FockDim dim(cfg.get<int>("code", "dim", default_gkp_dim()));
    GkpSpec spec{cfg.require<double>("code", "delta"), cfg.get<int>("code", "mu", 0), cfg.get<int>("code", "k_range", 0),
                 dim};
    if (cfg.get<std::string>("code", "family", "gkp") != "gkp") {
        throw ConfigError("detect-gkp needs code.family = gkp");
    }
    int m = cfg.require<int>("schedule", "m");
    QuantumState ideal = gkp_state(spec);
    double dx = cfg.get<double>("error", "displacement_x", 0.0);
    double dp = cfg.get<double>("error", "displacement_p", 0.0);
    QuantumState input = ideal;
    if (dx != 0.0 || dp != 0.0) {
        // Displacements are in units of sqrt(pi) along each quadrature.
        cplx a(dx * std::sqrt(pi / 2.0), dp * std::sqrt(pi / 2.0));
        input = QuantumState::pure(displacement(a, dim) * ideal.vector());
    }
    if (auto ch = loss_from(cfg)) {
        input = apply_loss(input, *ch);
    }
    GkpCouplings c = GkpCouplings::make(dim);
    std::size_t samples = cfg.get<std::size_t>("sampling", "samples", 0);
    std::optional<HardwareParams> noise;
    if (cfg.noisy()) {
        noise = cfg.hardware();
    }
    GkpFidelityReport r = gkp_detection_fidelity(input, ideal, c, m, noise, samples, cfg.seed(), ctx.workers);

    HardwareParams hw = cfg.hardware();
    QpeSchedule sq = QpeSchedule::quadrature(m, QuadratureAxis::Q, hw.g);
    ResultBundle b;
    int scale = 1 << m;
    std::map<int, double> mx, mp;
    json outcomes = json::array();
    for (const auto &[key, e] : r.per_outcome) {
        mx[key.first] += e.probability;
        mp[key.second] += e.probability;
        outcomes.push_back({{"theta_x", static_cast<double>(key.first) / scale},
                            {"theta_p", static_cast<double>(key.second) / scale},
                            {"delta_x", e.delta_x},
                            {"delta_p", e.delta_p},
                            {"probability", e.probability},
                            {"fidelity", e.fidelity}});
    }
    for (int reg = 0; reg < 2; ++reg) {
        const auto &marg = reg == 0 ? mx : mp;
        for (int j = 0; j < scale; ++j) {
            auto it = marg.find(j);
            double theta = static_cast<double>(j) / scale;
            b.histogram.push_back({theta, it == marg.end() ? 0.0 : it->second,
                                   std::string(reg == 0 ? "x" : "p") + ";delta=" + format_double(gkp_delta(theta))});
        }
    }
    b.summary = {{"experiment", cfg.experiment()},
                 {"name", cfg.name()},
                 {"m", m},
                 {"delta", spec.delta},
                 {"dim", dim.value()},
                 {"schedule_per_quadrature", schedule_json(sq)},
                 {"t_tot_us", 2.0 * sq.total_time()},
                 {"noise", cfg.noisy() ? "hardware" : "off"},
                 {"average_fidelity", r.average},
                 {"standard_error", r.standard_error},
                 {"delta_x_peak", histogram_peak(r.delta_x_histogram)},
                 {"delta_p_peak", histogram_peak(r.delta_p_histogram)},
                 {"injected_displacement", {{"x", dx}, {"p", dp}}},
                 {"outcomes", outcomes}};
    if (samples > 0) {
        b.summary["samples"] = samples;
        b.summary["seed"] = cfg.seed();
    }
    if (cfg.wants("wigner")) {
        b.wigner = wigner_table(input, cfg, ctx.workers);
    }
    return b;
}

inline ResultBundle run_prepare_code(const ExperimentConfig &cfg, const RunContext &ctx) {
    if (cfg.noisy()) {
        throw ConfigError("prepare-code runs noiselessly; set noise.model to off");
    }
    RotationCodeSpec spec = rotation_spec(cfg);
    int m = cfg.require<int>("schedule", "m");
    HardwareParams hw = cfg.hardware();
    QuantumState primitive = std::holds_alternative<CatFamily>(spec.family)
                                 ? coherent_state(std::get<CatFamily>(spec.family).alpha, spec.dim)
                                 : binomial_primitive(spec.N, std::get<BinomialFamily>(spec.family).K, spec.dim);
    Preparation prep = prepare_by_projection(primitive, spec.N, spec.mu, m, hw.chi);
    QuantumState target = code_state(spec);
    QpeSchedule sched = QpeSchedule::preparation(m, spec.N, hw.chi);
    OutcomeDistribution dist = outcome_distribution(primitive, sched);

    ResultBundle b;
    for (std::size_t j = 0; j < dist.p.size(); ++j) {
        double theta = dist.theta(j);
        b.histogram.push_back({theta, dist.p[j], "r=" + std::to_string(rotation_bin(theta, 2 * spec.N))});
    }
    RealVector pops = prep.state.populations();
    b.summary = {{"experiment", cfg.experiment()},
                 {"name", cfg.name()},
                 {"N", spec.N},
                 {"mu", spec.mu},
                 {"m", m},
                 {"schedule", schedule_json(sched)},
                 {"theta", prep.theta},
                 {"acceptance_probability", prep.probability},
                 {"fidelity", fidelity(prep.state, target)},
                 {"populations", std::vector<double>(pops.data(), pops.data() + pops.size())}};
    if (cfg.wants("wigner")) {
        b.wigner = wigner_table(prep.state, cfg, ctx.workers);
    }
    return b;
}

inline ResultBundle run_fock_generate(const ExperimentConfig &cfg, const RunContext &ctx) {
    if (cfg.noisy()) {
        throw ConfigError("fock-generate runs noiselessly; set noise.model to off");
    }
    if (cfg.get<std::string>("code", "family", "coherent") != "coherent") {
        throw ConfigError("fock-generate needs code.family = coherent");
    }
    FockDim dim(cfg.require<int>("code", "dim"));
    double alpha = cfg.require<double>("code", "alpha");
    long target = cfg.require<long>("code", "target");
    int m = cfg.require<int>("schedule", "m");
    CrtPlan plan(cfg.require<std::vector<int>>("schedule", "moduli"), m);
    if (target >= dim.value()) {
        throw InvalidDimension("target level " + std::to_string(target) + " is outside the truncation");
    }
    std::uint64_t seed = cfg.seed();
    std::size_t detections = cfg.get<std::size_t>("sampling", "detections", 10);
    std::size_t max_attempts = cfg.get<std::size_t>("sampling", "max_attempts", 10000);
    HardwareParams hw = cfg.hardware();

    QuantumState fock = QuantumState::fock(target, dim);
    std::vector<long> detected(detections, -1);
    parallel_for(detections, ctx.workers, [&](std::size_t s, int) {
        PhiloxStream rng(seed, s);
        try {
            detected[s] = static_cast<long>(detect_photon_number(fock, plan, rng).n);
        } catch (const LowConfidence &) {
        }
    });
    std::size_t correct = static_cast<std::size_t>(std::count(detected.begin(), detected.end(), target));

    QuantumState coherent = coherent_state(alpha, dim);
    ResultBundle b;
    // Stage histograms: the Fock input, then the coherent input conditioned
    // on the target bin of every earlier stage.
    Operator rho = coherent.density_matrix();
    for (std::size_t i = 0; i < plan.moduli.size(); ++i) {
        int N = plan.moduli[i];
        SpectralCoupling c = SpectralCoupling::rotation(N, dim);
        OutcomeDistribution df = outcome_distribution(fock, c, m);
        QuantumState cur = QuantumState::density(rho);
        OutcomeDistribution dc = outcome_distribution(cur, c, m);
        std::string tag = ";N=" + std::to_string(N);
        for (std::size_t j = 0; j < df.p.size(); ++j) {
            b.histogram.push_back(
                {df.theta(j), df.p[j], "fock" + tag + ";l=" + std::to_string(rotation_bin(df.theta(j), N))});
        }
        for (std::size_t j = 0; j < dc.p.size(); ++j) {
            b.histogram.push_back(
                {dc.theta(j), dc.p[j], "coherent" + tag + ";l=" + std::to_string(rotation_bin(dc.theta(j), N))});
        }
        rho = postselect_fock_exact(cur, target, CrtPlan({N}, m)).first.density_matrix();
    }

    FockGeneration gen = generate_fock(coherent, target, plan, seed, max_attempts);
    auto [exact_state, exact_p] = postselect_fock_exact(coherent, target, plan);
    RealVector pops = gen.state.populations();
    std::vector<int> residues;
    for (int N : plan.moduli) {
        residues.push_back(static_cast<int>(target % N));
    }
    json stages = json::array();
    for (int N : plan.moduli) {
        stages.push_back(schedule_json(QpeSchedule::rotation(m, N, hw.chi)));
    }
    b.summary = {{"experiment", cfg.experiment()},
                 {"name", cfg.name()},
                 {"target", target},
                 {"moduli", plan.moduli},
                 {"target_residues", residues},
                 {"m", m},
                 {"stages", stages},
                 {"seed", seed},
                 {"detections", detected},
                 {"detections_correct", correct},
                 {"generation",
                  {{"attempts", gen.attempts},
                   {"acceptance_rate", gen.acceptance_rate},
                   {"thetas", gen.thetas},
                   {"target_population", pops(target)},
                   {"populations", std::vector<double>(pops.data(), pops.data() + pops.size())}}},
                 {"exact_postselection",
                  {{"acceptance_probability", exact_p},
                   {"target_population", exact_state.populations()(target)}}}};
    if (cfg.wants("wigner")) {
        b.wigner = wigner_table(gen.state, cfg, ctx.workers);
    }
    return b;
}

/// Shared driver for the two scans. `noisy` picks total_infidelity_noisy.
inline std::vector<InfidelityReport> scan_reports(const ExperimentConfig &cfg, const RunContext &ctx, bool noisy) {
    double alpha = cfg.require<double>("code", "alpha");
    double xi = cfg.get<double>("schedule", "xi", 0.15);
    FockDim dim(cfg.get<int>("code", "dim", default_cat_dim()));
    if (cfg.get<std::string>("code", "family", "cat") != "cat") {
        throw ConfigError(cfg.experiment() + " uses lossy cat inputs; code.family must be cat");
    }
    auto Ns = cfg.require<std::vector<int>>("schedule", "N_values");
    auto ms = cfg.require<std::vector<int>>("schedule", "m_values");
    HardwareParams hw = cfg.hardware();
    std::size_t samples = cfg.get<std::size_t>("sampling", "samples", 0);
    std::vector<InfidelityReport> out;
    for (int N : Ns) {
        QuantumState in = lossy_cat_input(N, alpha, xi, dim);
        for (int m : ms) {
            if (!noisy) {
                out.push_back(samples == 0 ? deduction_report(in, N, m, hw.chi)
                                           : sampled_deduction_infidelity(in, N, m, samples, cfg.seed(), ctx.workers));
                out.back().t_tot = QpeSchedule::rotation(m, N, hw.chi).total_time();
            } else {
                LindbladModel model = default_hardware_model(CouplingKind::dispersive, dim, hw);
                out.push_back(
                    total_infidelity_noisy(in, N, m, model, samples, cfg.seed(), ctx.workers, cfg.noisy_options()));
            }
        }
    }
    return out;
}

inline void fill_scan(ResultBundle &b, const std::vector<InfidelityReport> &reports) {
    ScanTable t{{"N", "m", "t_tot_us", "infidelity", "standard_error"}, {}};
    json points = json::array();
    for (const auto &r : reports) {
        t.rows.push_back({static_cast<double>(r.N), static_cast<double>(r.m), r.t_tot, r.total, r.standard_error});
        points.push_back(report_json(r));
        std::string tag = "N=" + std::to_string(r.N) + ";m=" + std::to_string(r.m);
        for (const auto &[l, s] : r.per_bin) {
            b.histogram.push_back({static_cast<double>(l) / r.N, s.probability, tag + ";l=" + std::to_string(l)});
        }
    }
    b.scan = std::move(t);
    b.summary["points"] = points;
}

inline ResultBundle run_infidelity_scan(const ExperimentConfig &cfg, const RunContext &ctx) {
    auto reports = scan_reports(cfg, ctx, cfg.noisy());
    ResultBundle b;
    b.summary = {{"experiment", cfg.experiment()},
                 {"name", cfg.name()},
                 {"noise", cfg.noisy() ? "hardware" : "off"},
                 {"xi", cfg.get<double>("schedule", "xi", 0.15)}};
    fill_scan(b, reports);
    json optimum = json::object();
    for (const auto &r : reports) {
        std::string key = std::to_string(r.N);
        if (!optimum.contains(key) || r.total < optimum[key]["infidelity"].get<double>()) {
            optimum[key] = {{"m", r.m}, {"infidelity", r.total}, {"t_tot_us", r.t_tot}};
        }
    }
    b.summary["optimum"] = optimum;
    return b;
}

inline ResultBundle run_heisenberg_scan(const ExperimentConfig &cfg, const RunContext &ctx) {
    if (cfg.noisy()) {
        throw ConfigError("heisenberg-scan is noiseless; use infidelity-scan for hardware noise");
    }
    auto reports = scan_reports(cfg, ctx, false);
    ResultBundle b;
    b.summary = {{"experiment", cfg.experiment()}, {"name", cfg.name()}, {"xi", cfg.get<double>("schedule", "xi", 0.15)}};
    fill_scan(b, reports);
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> series;
    for (const auto &r : reports) {
        if (r.total > 1e-12) {
            series[r.N].first.push_back(r.t_tot);
            series[r.N].second.push_back(r.total);
        }
    }
    json slopes = json::object();
    for (const auto &[N, xy] : series) {
        if (xy.first.size() >= 2) {
            slopes[std::to_string(N)] = loglog_slope(xy.first, xy.second);
        }
    }
    b.summary["loglog_slope"] = slopes;
    return b;
}

inline json manifest_for(const ExperimentConfig &cfg) {
    return json{{"tool", "bqpe"},
                {"version", library_version},
                {"schema_version", config_schema_version},
                {"experiment", cfg.experiment()},
                {"seed", cfg.seed()},
                {"config", cfg.raw()}};
}

/// Runs a config. Outputs depend only on the config (and its seed), never on
/// the worker count.
inline ResultBundle run_experiment(const ExperimentConfig &cfg, const RunContext &ctx = {}) {
    std::string e = cfg.experiment();
    ResultBundle b;
    if (e == "detect-rotation") {
        b = run_detect_rotation(cfg, ctx);
    } else if (e == "detect-gkp") {
        b = run_detect_gkp(cfg, ctx);
    } else if (e == "prepare-code") {
        b = run_prepare_code(cfg, ctx);
    } else if (e == "fock-generate") {
        b = run_fock_generate(cfg, ctx);
    } else if (e == "infidelity-scan") {
        b = run_infidelity_scan(cfg, ctx);
    } else {
        b = run_heisenberg_scan(cfg, ctx);
    }
    b.manifest = manifest_for(cfg);
    return b;
}

/// Structured error record printed by the CLI on failure.
inline json error_json(const std::string &kind, const std::string &message, int code) {
    return json{{"error", kind}, {"message", message}, {"exit_code", code}};
}

}  // namespace bqpe
