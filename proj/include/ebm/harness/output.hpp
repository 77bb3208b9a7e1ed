#pragma once

// Persistence: RFC 4180 CSV with 17 significant digits and a JSON summary,
// each written to a temporary file in the target directory and renamed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ebm/errors.hpp"
#include "ebm/harness/experiments.hpp"

namespace ebm::harness {

inline std::string format_double(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_cell(const Cell& c)
{
    struct {
        std::string operator()(std::monostate) const { return {}; }
        std::string operator()(double x) const { return format_double(x); }
        std::string operator()(long long x) const { return std::to_string(x); }
        std::string operator()(const std::string& s) const { return csv_escape(s); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
    } visit;
    return std::visit(visit, c);
}

/// RFC 4180 text: CRLF line breaks, quoted fields only where needed.
inline std::string to_csv(const Table& t)
{
    std::string out;
    for (std::size_t i = 0; i < t.header.size(); ++i)
        out += (i ? "," : "") + csv_escape(t.header[i]);
    out += "\r\n";
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size())
            throw DimensionMismatch("table " + t.name + ": row width differs from header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i)
                out += ',';
            out += format_cell(row[i]);
        }
        out += "\r\n";
    }
    return out;
}

inline void write_atomic(const std::filesystem::path& target, const std::string& content)
{
    namespace fs = std::filesystem;
    const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os)
            throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + target.string() + ": " + ec.message());
    }
}

inline json check_json(const Check& c)
{
    json j{{"name", c.name}, {"passed", c.passed}, {"value", c.value}};
    if (c.lower)
        j["lower"] = *c.lower;
    if (c.upper)
        j["upper"] = *c.upper;
    return j;
}

inline json summary_json(const RunSummary& s, const std::vector<std::string>& files = {})
{
    json j;
    j["experiment"] = to_string(s.kind);
    j["passed"] = s.passed();
    j["config_hash"] = s.config_hash;
    j["seed"] = s.seed;
    j["version"] = s.version;
    json checks = json::array();
    for (const auto& c : s.checks)
        checks.push_back(check_json(c));
    j["checks"] = checks;
    json scalars = json::object();
    for (const auto& [name, v] : s.scalars) {
        if (v.std_error)
            scalars[name] = {{"value", v.value}, {"stderr", *v.std_error}};
        else
            scalars[name] = v.value;
    }
    j["scalars"] = scalars;
    if (!s.thresholds.is_null())
        j["thresholds"] = s.thresholds;
    j["metadata"] = s.metadata;
    j["warnings"] = s.warnings;
    j["files"] = files;
    j["config"] = s.config;
    return j;
}

/// Writes every table as <name>.csv and the summary as summary.json into
/// `dir`, creating it if needed. Returns the file names in write order.
inline std::vector<std::string> emit_outputs(const RunResult& result, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    std::vector<std::string> files;
    for (const auto& t : result.tables) {
        const std::string name = t.name + ".csv";
        write_atomic(dir / name, to_csv(t));
        files.push_back(name);
    }
    files.push_back("summary.json");
    write_atomic(dir / "summary.json", summary_json(result.summary, files).dump(2) + "\n");
    return files;
}

} // namespace ebm::harness
