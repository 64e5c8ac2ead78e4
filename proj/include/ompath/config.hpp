#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#define TOML_EXCEPTIONS 1
#include "toml.hpp"

#include "ompath/bvp.hpp"
#include "ompath/error.hpp"
#include "ompath/levy.hpp"
#include "ompath/model.hpp"
#include "ompath/simulate.hpp"

namespace ompath::config {

using json = nlohmann::json;

/// Parsed document plus the source line of every field (TOML input only).
struct Document {
    json root;
    std::map<std::string, int> lines;
    std::string source;

    std::string where(const std::string& field) const {
        auto it = lines.find(field);
        if (it != lines.end()) {
            return source + ":" + std::to_string(it->second) + ": " + field;
        }
        return source + ": " + field;
    }
};

namespace detail {

inline json toml_to_json(const toml::node& node, const std::string& path, std::map<std::string, int>& lines) {
    lines[path] = static_cast<int>(node.source().begin.line);
    if (auto t = node.as_table()) {
        json out = json::object();
        for (const auto& [key, value] : *t) {
            const std::string child = path.empty() ? std::string(key.str()) : path + "." + std::string(key.str());
            out[std::string(key.str())] = toml_to_json(value, child, lines);
        }
        return out;
    }
    if (auto a = node.as_array()) {
        json out = json::array();
        for (std::size_t i = 0; i < a->size(); ++i) {
            out.push_back(toml_to_json(*a->get(i), path + "[" + std::to_string(i) + "]", lines));
        }
        return out;
    }
    if (auto v = node.as_integer()) {
        return v->get();
    }
    if (auto v = node.as_floating_point()) {
        return v->get();
    }
    if (auto v = node.as_boolean()) {
        return v->get();
    }
    if (auto v = node.as_string()) {
        return v->get();
    }
    throw Error(ErrorCode::input, "line " + std::to_string(node.source().begin.line) + ": " + path +
                                      ": unsupported TOML value type");
}

}  // namespace detail

/// Reads TOML, or JSON when the file ends in .json.
inline Document load_document(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::input, "cannot open config " + file.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    Document doc;
    doc.source = file.string();
    if (file.extension() == ".json") {
        try {
            doc.root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::input, doc.source + ": " + e.what());
        }
    } else {
        try {
            const toml::table table = toml::parse(text, doc.source);
            doc.root = detail::toml_to_json(table, "", doc.lines);
        } catch (const toml::parse_error& e) {
            std::ostringstream msg;
            msg << doc.source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
                << e.description();
            throw Error(ErrorCode::input, msg.str());
        }
    }
    if (!doc.root.is_object()) {
        throw Error(ErrorCode::input, doc.source + ": top level must be a table");
    }
    return doc;
}

struct ValidateOptions {
    double lo = -2.0;
    double hi = 2.0;
    int probes = 100;
    double tolerance = 1e-8;
};

/// Everything a subcommand may need. The system is kept in parts so that
/// validation can report gate or nondegeneracy failures instead of throwing.
struct RunConfig {
    int dimension = 0;
    std::optional<DriftField> drift;
    std::optional<BuiltinTag> builtin;
    Mat noise;
    std::vector<StableComponent> levy;
    Vec x0;
    std::optional<BoundaryPair> boundary;
    ShootingConfig shooting;
    MinimizerConfig minimizer;
    std::optional<SimConfig> simulation;
    double band_epsilon = 0.5;
    ValidateOptions validate;
    std::optional<std::string> output_dir;

    /// Throws Error(bounded_variation | singular_noise) when the parts do not
    /// form an admissible system. `allow_singular_noise` is for simulation.
    SystemSpec build_system(bool allow_singular_noise = false) const {
        NoiseMatrix b = allow_singular_noise ? NoiseMatrix::degenerate(noise) : NoiseMatrix(noise);
        return SystemSpec(*drift, std::move(b), levy, x0, builtin);
    }
};

namespace detail {

class Reader {
public:
    explicit Reader(const Document& doc) : doc_(doc) {}

    [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
        throw Error(ErrorCode::input, doc_.where(field) + ": " + msg);
    }

    const json* section(const std::string& name, const std::set<std::string>& allowed) const {
        if (!doc_.root.contains(name)) {
            return nullptr;
        }
        const json& s = doc_.root.at(name);
        if (!s.is_object()) {
            fail(name, "expected a table");
        }
        for (const auto& [key, _] : s.items()) {
            if (!allowed.count(key)) {
                fail(name + "." + key, "unknown field");
            }
        }
        return &s;
    }

    double number(const json& v, const std::string& field) const {
        if (!v.is_number()) {
            fail(field, "expected a number");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            fail(field, "expected a finite number");
        }
        return x;
    }

    long long integer(const json& v, const std::string& field) const {
        if (v.is_number_integer() || v.is_number_unsigned()) {
            return v.get<long long>();
        }
        fail(field, "expected an integer");
    }

    std::string string(const json& v, const std::string& field) const {
        if (!v.is_string()) {
            fail(field, "expected a string");
        }
        return v.get<std::string>();
    }

    Vec vector(const json& v, const std::string& field, int expected = -1) const {
        if (!v.is_array()) {
            fail(field, "expected an array of numbers");
        }
        if (expected >= 0 && static_cast<int>(v.size()) != expected) {
            fail(field, "expected " + std::to_string(expected) + " entries, got " + std::to_string(v.size()));
        }
        Vec out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            out[static_cast<Eigen::Index>(i)] = number(v[i], field + "[" + std::to_string(i) + "]");
        }
        return out;
    }

    template <class F>
    void optional(const json* s, const std::string& sec, const char* key, F&& apply) const {
        if (s && s->contains(key)) {
            apply(s->at(key), sec + "." + key);
        }
    }

private:
    const Document& doc_;
};

inline std::vector<std::vector<Monomial>> parse_polynomial(const Reader& rd, const json& v, const std::string& field,
                                                           int d) {
    if (!v.is_array() || static_cast<int>(v.size()) != d) {
        rd.fail(field, "expected one term list per coordinate (" + std::to_string(d) + ")");
    }
    std::vector<std::vector<Monomial>> comps(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) {
        const std::string cf = field + "[" + std::to_string(c) + "]";
        const json& terms = v[static_cast<std::size_t>(c)];
        if (!terms.is_array()) {
            rd.fail(cf, "expected a list of [coef, e1..ed] terms");
        }
        for (std::size_t t = 0; t < terms.size(); ++t) {
            const std::string tf = cf + "[" + std::to_string(t) + "]";
            const json& term = terms[t];
            if (!term.is_array() || static_cast<int>(term.size()) != d + 1) {
                rd.fail(tf, "expected [coef, e1..e" + std::to_string(d) + "]");
            }
            Monomial m;
            m.coef = rd.number(term[0], tf + "[0]");
            for (int i = 1; i <= d; ++i) {
                const auto e = rd.integer(term[static_cast<std::size_t>(i)], tf + "[" + std::to_string(i) + "]");
                if (e < 0 || e > 64) {
                    rd.fail(tf + "[" + std::to_string(i) + "]", "exponent must lie in [0, 64]");
                }
                m.exponents.push_back(static_cast<int>(e));
            }
            comps[static_cast<std::size_t>(c)].push_back(std::move(m));
        }
    }
    return comps;
}

}  // namespace detail

/// Interprets a document against the run-config schema (see README).
inline RunConfig parse_run_config(const Document& doc) {
    detail::Reader rd(doc);
    for (const auto& [key, _] : doc.root.items()) {
        static const std::set<std::string> known{"system", "noise", "levy", "boundary", "solver",
                                                 "simulation", "validate", "output"};
        if (!known.count(key)) {
            rd.fail(key, "unknown section");
        }
    }
    RunConfig rc;

    const json* sys = rd.section("system", {"builtin", "gamma", "dimension", "drift", "x0"});
    if (!sys) {
        rd.fail("system", "missing section");
    }
    const std::string builtin = sys->contains("builtin") ? rd.string(sys->at("builtin"), "system.builtin") : "";
    if (builtin == "maier_stein") {
        double gamma = 1.0;
        rd.optional(sys, "system", "gamma", [&](const json& v, const std::string& f) { gamma = rd.number(v, f); });
        if (!(gamma > 0.0)) {
            rd.fail("system.gamma", "must be positive");
        }
        if (sys->contains("drift")) {
            rd.fail("system.drift", "not allowed with builtin = \"maier_stein\"");
        }
        const SystemSpec ms = maier_stein(gamma);
        rc.dimension = 2;
        rc.drift = ms.raw_drift();
        rc.builtin = ms.builtin();
    } else if (builtin == "polynomial" || builtin.empty()) {
        if (!sys->contains("dimension")) {
            rd.fail("system.dimension", "required for polynomial drift");
        }
        const auto d = rd.integer(sys->at("dimension"), "system.dimension");
        if (d < 1 || d > 16) {
            rd.fail("system.dimension", "must lie in [1, 16]");
        }
        rc.dimension = static_cast<int>(d);
        if (!sys->contains("drift")) {
            rd.fail("system.drift", "required for polynomial drift");
        }
        rc.drift = polynomial_drift(rc.dimension,
                                    detail::parse_polynomial(rd, sys->at("drift"), "system.drift", rc.dimension));
    } else {
        rd.fail("system.builtin", "unknown builtin '" + builtin + "' (expected maier_stein or polynomial)");
    }
    const int d = rc.dimension;
    rc.x0 = Vec::Zero(d);
    rd.optional(sys, "system", "x0", [&](const json& v, const std::string& f) { rc.x0 = rd.vector(v, f, d); });

    rc.noise = Mat::Identity(d, d);
    if (const json* noise = rd.section("noise", {"matrix", "diag", "rows", "scale"})) {
        const std::string kind = noise->contains("matrix") ? rd.string(noise->at("matrix"), "noise.matrix")
                                 : noise->contains("rows") ? "dense"
                                 : noise->contains("diag") ? "diag"
                                                           : "identity";
        if (kind == "identity") {
            rc.noise = Mat::Identity(d, d);
        } else if (kind == "diag") {
            if (!noise->contains("diag")) {
                rd.fail("noise.diag", "required for matrix = \"diag\"");
            }
            rc.noise = rd.vector(noise->at("diag"), "noise.diag", d).asDiagonal();
        } else if (kind == "dense") {
            if (!noise->contains("rows")) {
                rd.fail("noise.rows", "required for matrix = \"dense\"");
            }
            const json& rows = noise->at("rows");
            if (!rows.is_array() || static_cast<int>(rows.size()) != d) {
                rd.fail("noise.rows", "expected " + std::to_string(d) + " rows");
            }
            for (int i = 0; i < d; ++i) {
                rc.noise.row(i) =
                    rd.vector(rows[static_cast<std::size_t>(i)], "noise.rows[" + std::to_string(i) + "]", d)
                        .transpose();
            }
        } else {
            rd.fail("noise.matrix", "expected identity, diag or dense");
        }
        rd.optional(noise, "noise", "scale", [&](const json& v, const std::string& f) { rc.noise *= rd.number(v, f); });
    }

    rc.levy.assign(static_cast<std::size_t>(d), StableComponent::none());
    if (const json* levy = rd.section("levy", {"components"})) {
        if (levy->contains("components")) {
            const json& comps = levy->at("components");
            if (!comps.is_array() || static_cast<int>(comps.size()) != d) {
                rd.fail("levy.components", "expected " + std::to_string(d) + " entries (one per coordinate)");
            }
            for (int j = 0; j < d; ++j) {
                const std::string f = "levy.components[" + std::to_string(j) + "]";
                const json& c = comps[static_cast<std::size_t>(j)];
                if (c.is_null() || (c.is_string() && c.get<std::string>() == "null")) {
                    continue;
                }
                if (!c.is_object()) {
                    rd.fail(f, "expected {alpha, sigma, beta, mu} or \"null\"");
                }
                for (const auto& [key, _] : c.items()) {
                    if (key != "alpha" && key != "sigma" && key != "beta" && key != "mu") {
                        rd.fail(f + "." + key, "unknown field");
                    }
                }
                if (!c.contains("alpha")) {
                    rd.fail(f + ".alpha", "required");
                }
                const double alpha = rd.number(c.at("alpha"), f + ".alpha");
                const double sigma = c.contains("sigma") ? rd.number(c.at("sigma"), f + ".sigma") : 1.0;
                const double beta = c.contains("beta") ? rd.number(c.at("beta"), f + ".beta") : 0.0;
                const double mu = c.contains("mu") ? rd.number(c.at("mu"), f + ".mu") : 0.0;
                try {
                    rc.levy[static_cast<std::size_t>(j)] = StableComponent::stable(alpha, sigma, beta, mu);
                } catch (const Error& e) {
                    rd.fail(f, e.what());
                }
            }
        }
    }

    if (const json* b = rd.section("boundary", {"z0", "z1", "T"})) {
        BoundaryPair bp;
        if (!b->contains("z0") || !b->contains("z1")) {
            rd.fail("boundary", "needs z0 and z1");
        }
        bp.z0 = rd.vector(b->at("z0"), "boundary.z0", d);
        bp.z1 = rd.vector(b->at("z1"), "boundary.z1", d);
        rd.optional(b, "boundary", "T", [&](const json& v, const std::string& f) { bp.horizon = rd.number(v, f); });
        if (!(bp.horizon > 0.0)) {
            rd.fail("boundary.T", "must be positive");
        }
        rc.boundary = bp;
    }

    if (const json* s = rd.section("solver", {"steps", "tolerance", "max_iterations", "fd_step",
                                              "minimizer_intervals", "minimizer_max_iterations",
                                              "gradient_tolerance"})) {
        auto as_int = [&](const json& v, const std::string& f) { return static_cast<int>(rd.integer(v, f)); };
        rd.optional(s, "solver", "steps", [&](const json& v, const std::string& f) { rc.shooting.steps = as_int(v, f); });
        rd.optional(s, "solver", "tolerance",
                    [&](const json& v, const std::string& f) { rc.shooting.tolerance = rd.number(v, f); });
        rd.optional(s, "solver", "max_iterations",
                    [&](const json& v, const std::string& f) { rc.shooting.max_iterations = as_int(v, f); });
        rd.optional(s, "solver", "fd_step",
                    [&](const json& v, const std::string& f) { rc.shooting.fd_step = rd.number(v, f); });
        rd.optional(s, "solver", "minimizer_intervals",
                    [&](const json& v, const std::string& f) { rc.minimizer.intervals = as_int(v, f); });
        rd.optional(s, "solver", "minimizer_max_iterations",
                    [&](const json& v, const std::string& f) { rc.minimizer.max_iterations = as_int(v, f); });
        rd.optional(s, "solver", "gradient_tolerance",
                    [&](const json& v, const std::string& f) { rc.minimizer.gradient_tolerance = rd.number(v, f); });
        try {
            rc.shooting.validate();
            rc.minimizer.validate();
        } catch (const Error& e) {
            rd.fail("solver", e.what());
        }
    }

    if (const json* s = rd.section("simulation", {"dt", "T", "paths", "seed", "large_jumps", "monitoring", "epsilon"})) {
        SimConfig sc;
        rd.optional(s, "simulation", "dt", [&](const json& v, const std::string& f) { sc.dt = rd.number(v, f); });
        rd.optional(s, "simulation", "T", [&](const json& v, const std::string& f) { sc.horizon = rd.number(v, f); });
        rd.optional(s, "simulation", "paths",
                    [&](const json& v, const std::string& f) { sc.paths = static_cast<int>(rd.integer(v, f)); });
        rd.optional(s, "simulation", "seed", [&](const json& v, const std::string& f) {
            const auto seed = rd.integer(v, f);
            if (seed < 0) {
                rd.fail(f, "must be non-negative");
            }
            sc.seed = static_cast<std::uint64_t>(seed);
        });
        rd.optional(s, "simulation", "large_jumps", [&](const json& v, const std::string& f) {
            const auto k = rd.string(v, f);
            if (k != "keep" && k != "drop") {
                rd.fail(f, "expected keep or drop");
            }
            sc.large_jumps = k == "drop" ? LargeJumps::drop : LargeJumps::keep;
        });
        rd.optional(s, "simulation", "monitoring", [&](const json& v, const std::string& f) {
            const auto k = rd.string(v, f);
            if (k != "grid" && k != "bridge") {
                rd.fail(f, "expected grid or bridge");
            }
            sc.monitoring = k == "bridge" ? TubeMonitoring::bridge : TubeMonitoring::grid;
        });
        rd.optional(s, "simulation", "epsilon",
                    [&](const json& v, const std::string& f) { rc.band_epsilon = rd.number(v, f); });
        if (!(rc.band_epsilon > 0.0)) {
            rd.fail("simulation.epsilon", "must be positive");
        }
        try {
            sc.validate();
        } catch (const Error& e) {
            rd.fail("simulation", e.what());
        }
        rc.simulation = sc;
    }

    if (const json* v = rd.section("validate", {"box", "probes", "tolerance"})) {
        rd.optional(v, "validate", "box", [&](const json& b, const std::string& f) {
            const Vec box = rd.vector(b, f, 2);
            if (!(box[0] < box[1])) {
                rd.fail(f, "expected [lo, hi] with lo < hi");
            }
            rc.validate.lo = box[0];
            rc.validate.hi = box[1];
        });
        rd.optional(v, "validate", "probes", [&](const json& p, const std::string& f) {
            rc.validate.probes = static_cast<int>(rd.integer(p, f));
            if (rc.validate.probes < 1) {
                rd.fail(f, "must be at least 1");
            }
        });
        rd.optional(v, "validate", "tolerance", [&](const json& t, const std::string& f) {
            rc.validate.tolerance = rd.number(t, f);
            if (!(rc.validate.tolerance > 0.0)) {
                rd.fail(f, "must be positive");
            }
        });
    }

    if (const json* o = rd.section("output", {"dir"})) {
        rd.optional(o, "output", "dir", [&](const json& v, const std::string& f) { rc.output_dir = rd.string(v, f); });
    }
    return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& file) { return parse_run_config(load_document(file)); }

}  // namespace ompath::config
