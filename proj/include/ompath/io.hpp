#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ompath/bvp.hpp"
#include "ompath/error.hpp"
#include "ompath/model.hpp"
#include "ompath/path.hpp"
#include "ompath/simulate.hpp"

namespace ompath::io {

using json = nlohmann::json;

inline constexpr int report_schema_version = 1;

/// 17 significant digits, enough to round-trip any double.
inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Replaces `target` with `content` via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& target, const std::string& content) {
    if (target.has_parent_path()) {
        std::filesystem::create_directories(target.parent_path());
    }
    auto tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::input, "cannot write " + tmp.string());
        }
        out << content;
        if (!out) {
            throw Error(ErrorCode::input, "write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, target);
}

inline json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// `t,x1..xd` rows for a single path.
inline std::string path_csv(const Path& path) {
    std::string s = "t";
    for (int i = 1; i <= path.dimension(); ++i) {
        s += ",x" + std::to_string(i);
    }
    s += "\n";
    for (int k = 0; k <= path.intervals(); ++k) {
        s += fmt(path.time(k));
        for (int i = 0; i < path.dimension(); ++i) {
            s += "," + fmt(path.values()(k, i));
        }
        s += "\n";
    }
    return s;
}

/// Long-format `solver,t,x1..xd` rows, one block per solver.
inline std::string solver_paths_csv(const std::vector<std::pair<std::string, const Path*>>& paths) {
    if (paths.empty()) {
        return "solver,t\n";
    }
    const int d = paths.front().second->dimension();
    std::string s = "solver,t";
    for (int i = 1; i <= d; ++i) {
        s += ",x" + std::to_string(i);
    }
    s += "\n";
    for (const auto& [name, path] : paths) {
        for (int k = 0; k <= path->intervals(); ++k) {
            s += name + "," + fmt(path->time(k));
            for (int i = 0; i < d; ++i) {
                s += "," + fmt(path->values()(k, i));
            }
            s += "\n";
        }
    }
    return s;
}

inline std::string band_csv(const Ensemble& ensemble, const Vec& coverage) {
    std::string s = "t,coverage\n";
    for (int k = 0; k < coverage.size(); ++k) {
        s += fmt(ensemble.time(k)) + "," + fmt(coverage[k]) + "\n";
    }
    return s;
}

/// `t,path_id,x1..xd`; escaped paths stop at their last valid row.
inline std::string ensemble_csv(const Ensemble& ensemble) {
    const int d = ensemble.paths.empty() ? 0 : static_cast<int>(ensemble.paths.front().values.cols());
    std::string s = "t,path_id";
    for (int i = 1; i <= d; ++i) {
        s += ",x" + std::to_string(i);
    }
    s += "\n";
    for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
        const auto& path = ensemble.paths[p];
        const std::string id = std::to_string(p);
        for (int k = 0; k < path.valid_rows(); ++k) {
            s += fmt(ensemble.time(k)) + "," + id;
            for (int i = 0; i < d; ++i) {
                s += "," + fmt(path.values(k, i));
            }
            s += "\n";
        }
    }
    return s;
}

inline json sim_config_json(const SimConfig& cfg) {
    return {{"dt", cfg.dt},
            {"T", cfg.horizon},
            {"paths", cfg.paths},
            {"seed", cfg.seed},
            {"large_jumps", to_string(cfg.large_jumps)},
            {"monitoring", to_string(cfg.monitoring)}};
}

/// Sidecar for ensemble.csv: everything needed to regenerate it bit-exactly.
inline json ensemble_metadata(const Ensemble& ensemble) {
    json seeds = json::array();
    for (auto s : ensemble.seeds) {
        seeds.push_back(s);
    }
    json escaped = json::array();
    for (std::size_t i = 0; i < ensemble.paths.size(); ++i) {
        if (ensemble.paths[i].escaped()) {
            escaped.push_back({{"path_id", i}, {"step", ensemble.paths[i].escape_step}});
        }
    }
    return {{"schema_version", report_schema_version},
            {"system_digest", ensemble.digest},
            {"config", sim_config_json(ensemble.cfg)},
            {"seed_rule", "path seed = base seed + path index; engine mt19937_64 seeded with splitmix64(path seed)"},
            {"seeds", seeds},
            {"escape_radius", escape_radius},
            {"escaped_count", ensemble.escaped_count()},
            {"escaped", escaped}};
}

/// Inverse of sim_config_json.
inline SimConfig sim_config_from_json(const json& j) {
    SimConfig cfg;
    cfg.dt = j.at("dt").get<double>();
    cfg.horizon = j.at("T").get<double>();
    cfg.paths = j.at("paths").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.large_jumps = j.at("large_jumps").get<std::string>() == "drop" ? LargeJumps::drop : LargeJumps::keep;
    cfg.monitoring = j.at("monitoring").get<std::string>() == "bridge" ? TubeMonitoring::bridge : TubeMonitoring::grid;
    return cfg;
}

inline json solve_result_json(const SolveResult& r) {
    json warnings = json::array();
    for (const auto& w : r.warnings) {
        warnings.push_back(w);
    }
    return {{"method", r.method},
            {"converged", r.converged},
            {"diverged", r.diverged},
            {"boundary_mismatch_norm", r.boundary_mismatch_norm},
            {"el_residual_max", r.el_residual_max},
            {"action", r.action},
            {"iterations", r.iterations},
            {"gradient_norm", r.gradient_norm},
            {"initial_velocity", to_json(r.initial_velocity)},
            {"intervals", r.path.intervals()},
            {"warnings", warnings}};
}

/// Reads a CSV of numbers with a header row. Cells are returned row-major.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw Error(ErrorCode::input, "cannot open " + file.string());
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
                cell.pop_back();
            }
            std::size_t start = cell.find_first_not_of(' ');
            cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
        }
        return cells;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::input, file.string() + ": empty file");
    }
    t.header = split(line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw Error(ErrorCode::input, file.string() + ":" + std::to_string(lineno) + ": expected " +
                                              std::to_string(t.header.size()) + " columns");
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline double parse_number(const std::string& cell, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        throw Error(ErrorCode::input, where + ": not a number: '" + cell + "'");
    }
    if (used != cell.size()) {
        throw Error(ErrorCode::input, where + ": not a number: '" + cell + "'");
    }
    return v;
}

/// Loads `t,x1..xd` (or the first block of a `solver,t,...` file).
inline Path read_path_csv(const std::filesystem::path& file, std::string* solver = nullptr) {
    CsvTable t = read_csv(file);
    std::size_t first = 0;
    std::string block;
    if (!t.header.empty() && t.header[0] == "solver") {
        first = 1;
        if (!t.rows.empty()) {
            block = t.rows.front()[0];
        }
    }
    if (t.header.size() < first + 2 || t.header[first] != "t") {
        throw Error(ErrorCode::input, file.string() + ": header must be t,x1..xd");
    }
    const auto d = static_cast<Eigen::Index>(t.header.size() - first - 1);
    std::vector<double> times;
    std::vector<std::vector<double>> vals;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (first == 1 && row[0] != block) {
            continue;
        }
        const std::string where = file.string() + ":" + std::to_string(r + 2);
        times.push_back(parse_number(row[first], where));
        std::vector<double> v;
        for (std::size_t c = first + 1; c < row.size(); ++c) {
            v.push_back(parse_number(row[c], where));
        }
        vals.push_back(std::move(v));
    }
    Mat m(static_cast<Eigen::Index>(vals.size()), d);
    for (std::size_t r = 0; r < vals.size(); ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
            m(static_cast<Eigen::Index>(r), c) = vals[r][static_cast<std::size_t>(c)];
        }
    }
    if (solver) {
        *solver = block;
    }
    return Path::from_samples(times, std::move(m));
}

}  // namespace ompath::io
