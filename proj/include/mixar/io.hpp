#pragma once

/** @file
 * File formats: one-value-per-line series, JSON model and generative-spec
 * files, and run manifests.
 *
 * Model files look like
 *
 *     {
 *       "format": "mixar-model",
 *       "version": 1,
 *       "lags": 1,
 *       "components": [
 *         {"weight": 0.7, "kind": "linear", "linear_a": [0.1], "linear_b": 0.5, "sigma": 0.5},
 *         {"weight": 0.3, "kind": "mlp", "hidden_units": 1, "alpha0": 0.0, "alpha": [1.0],
 *          "beta0": [0.0], "beta": [[0.5]], "sigma": 0.5}
 *       ]
 *     }
 *
 * Reals are written with 17 significant digits so that reading a saved
 * model reproduces every double exactly.
 */

#include "mixar/error.hpp"
#include "mixar/model.hpp"
#include "mixar/simulator.hpp"

#include <json.hpp>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mixar {

// ---------------------------------------------------------------------------
// Series files
// ---------------------------------------------------------------------------

/// Parses one numeric sample per line. Blank lines are skipped and
/// surrounding whitespace is ignored; anything else is an IngestionError
/// naming the line.
inline SeriesData parse_series(std::istream& in, const std::string& source = "<stream>")
{
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r\n\f\v");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r\n\f\v");
        const std::string token = line.substr(first, last - first + 1);
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size() || errno == ERANGE || !std::isfinite(v))
            throw IngestionError(source + ":" + std::to_string(line_no) + ": not a finite number: '" + token + "'",
                                 line_no);
        values.push_back(v);
    }
    return SeriesData(std::move(values));
}

inline SeriesData read_series(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open data file '" + path + "'");
    return parse_series(in, path);
}

/// Shortest form for human-facing numbers, 17 digits where exactness matters.
inline std::string format_real(double v, int digits = 17)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline void write_series(std::ostream& out, const SeriesData& series)
{
    for (double v : series.values()) out << format_real(v) << '\n';
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string real_array(const std::vector<double>& v)
{
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_real(v[i]);
    }
    return s + "]";
}

inline void write_expert_fields(std::ostream& out, const ExpertParams& e, const std::string& indent)
{
    out << indent << "\"kind\": \"" << to_string(e.kind) << "\",\n";
    if (e.kind == ExpertKind::linear) {
        out << indent << "\"linear_a\": " << real_array(e.linear_a) << ",\n";
        out << indent << "\"linear_b\": " << format_real(e.linear_b) << ",\n";
    } else {
        out << indent << "\"hidden_units\": " << e.hidden_units << ",\n";
        out << indent << "\"alpha0\": " << format_real(e.alpha0) << ",\n";
        out << indent << "\"alpha\": " << real_array(e.alpha) << ",\n";
        out << indent << "\"beta0\": " << real_array(e.beta0) << ",\n";
        out << indent << "\"beta\": [";
        for (std::size_t j = 0; j < e.hidden_units; ++j) {
            if (j) out << ", ";
            std::vector<double> row(e.beta.begin() + static_cast<std::ptrdiff_t>(j * e.lags),
                                    e.beta.begin() + static_cast<std::ptrdiff_t>((j + 1) * e.lags));
            out << real_array(row);
        }
        out << "],\n";
    }
    out << indent << "\"sigma\": " << format_real(e.sigma) << "\n";
}

using json = nlohmann::json;

class FieldReader {
public:
    explicit FieldReader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& path, const std::string& what) const
    {
        throw IngestionError(source_ + ": " + path + ": " + what);
    }

    const json& field(const json& obj, const std::string& path, const char* key) const
    {
        if (!obj.is_object()) fail(path, "expected an object");
        auto it = obj.find(key);
        if (it == obj.end()) fail(path + "." + key, "missing field");
        return *it;
    }

    double real(const json& v, const std::string& path) const
    {
        if (!v.is_number()) fail(path, "expected a number");
        return v.get<double>();
    }

    std::size_t count(const json& v, const std::string& path) const
    {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(path, "expected a non-negative integer");
        return v.get<std::size_t>();
    }

    std::vector<double> reals(const json& v, const std::string& path) const
    {
        if (!v.is_array()) fail(path, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(real(v[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }

    const std::string& source() const noexcept { return source_; }

private:
    std::string source_;
};

inline ExpertParams read_expert(const FieldReader& rd, const json& c, const std::string& path, std::size_t lags)
{
    const json& kind = rd.field(c, path, "kind");
    if (!kind.is_string() || (kind != "linear" && kind != "mlp"))
        rd.fail(path + ".kind", "expected \"linear\" or \"mlp\"");
    const double sigma = rd.real(rd.field(c, path, "sigma"), path + ".sigma");

    if (kind == "linear") {
        auto a = rd.reals(rd.field(c, path, "linear_a"), path + ".linear_a");
        if (a.size() != lags) rd.fail(path + ".linear_a", "length differs from lags");
        const double b = rd.real(rd.field(c, path, "linear_b"), path + ".linear_b");
        return ExpertParams::make_linear(std::move(a), b, sigma);
    }

    const std::size_t k = rd.count(rd.field(c, path, "hidden_units"), path + ".hidden_units");
    const double alpha0 = rd.real(rd.field(c, path, "alpha0"), path + ".alpha0");
    auto alpha = rd.reals(rd.field(c, path, "alpha"), path + ".alpha");
    auto beta0 = rd.reals(rd.field(c, path, "beta0"), path + ".beta0");
    if (alpha.size() != k) rd.fail(path + ".alpha", "length differs from hidden_units");
    if (beta0.size() != k) rd.fail(path + ".beta0", "length differs from hidden_units");
    const json& rows = rd.field(c, path, "beta");
    if (!rows.is_array() || rows.size() != k) rd.fail(path + ".beta", "expected hidden_units rows");
    std::vector<double> beta;
    for (std::size_t j = 0; j < k; ++j) {
        const std::string rp = path + ".beta[" + std::to_string(j) + "]";
        auto row = rd.reals(rows[j], rp);
        if (row.size() != lags) rd.fail(rp, "length differs from lags");
        beta.insert(beta.end(), row.begin(), row.end());
    }
    return ExpertParams::make_mlp(alpha0, std::move(alpha), std::move(beta0), std::move(beta), lags, sigma);
}

inline MixtureModel read_model_json(const FieldReader& rd, const json& doc, const std::string& path)
{
    if (doc.contains("format") && doc["format"] != "mixar-model")
        rd.fail(path + ".format", "expected \"mixar-model\"");
    const std::size_t lags = rd.count(rd.field(doc, path, "lags"), path + ".lags");
    if (lags == 0) rd.fail(path + ".lags", "must be positive");
    const json& comps = rd.field(doc, path, "components");
    if (!comps.is_array() || comps.empty()) rd.fail(path + ".components", "expected a non-empty array");

    MixtureModel m;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const std::string cp = path + ".components[" + std::to_string(i) + "]";
        m.weights.push_back(rd.real(rd.field(comps[i], cp, "weight"), cp + ".weight"));
        m.experts.push_back(read_expert(rd, comps[i], cp, lags));
    }
    try {
        validate(m);
    } catch (const InvariantError& e) {
        rd.fail(path, std::string("invariant violated: ") + e.what());
    }
    return m;
}

inline json parse_json(std::istream& in, const std::string& source)
{
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw IngestionError(source + ": malformed JSON: " + e.what());
    }
}

} // namespace detail

/// Writes the model as JSON with 17-significant-digit reals.
inline void save_model(std::ostream& out, const MixtureModel& m)
{
    validate(m);
    out << "{\n  \"format\": \"mixar-model\",\n  \"version\": 1,\n";
    out << "  \"lags\": " << m.lags() << ",\n  \"components\": [\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        out << "    {\n      \"weight\": " << format_real(m.weights[i]) << ",\n";
        detail::write_expert_fields(out, m.experts[i], "      ");
        out << "    }" << (i + 1 < m.size() ? "," : "") << "\n";
    }
    out << "  ]\n}\n";
}

inline std::string model_to_string(const MixtureModel& m)
{
    std::ostringstream out;
    save_model(out, m);
    return out.str();
}

inline void save_model(const std::string& path, const MixtureModel& m)
{
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write model file '" + path + "'");
    save_model(out, m);
}

/// Parses a model file; errors name the offending field path, e.g.
/// `$.components[1].sigma`.
inline MixtureModel load_model(std::istream& in, const std::string& source = "<stream>")
{
    const auto doc = detail::parse_json(in, source);
    return detail::read_model_json(detail::FieldReader(source), doc, "$");
}

inline MixtureModel load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open model file '" + path + "'");
    return load_model(in, path);
}

/// Generative spec files: {"model": <model object>, "initial_window": [...], "burn_in": 100}.
/// The last two fields are optional.
inline GenerativeSpec load_spec(std::istream& in, const std::string& source = "<stream>")
{
    const auto doc = detail::parse_json(in, source);
    const detail::FieldReader rd(source);
    GenerativeSpec spec;
    spec.truth = detail::read_model_json(rd, rd.field(doc, "$", "model"), "$.model");
    if (doc.contains("initial_window")) spec.initial_window = rd.reals(doc["initial_window"], "$.initial_window");
    if (doc.contains("burn_in")) spec.burn_in = rd.count(doc["burn_in"], "$.burn_in");
    try {
        validate(spec);
    } catch (const InvariantError& e) {
        rd.fail("$", std::string("invariant violated: ") + e.what());
    }
    return spec;
}

inline GenerativeSpec load_spec(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open spec file '" + path + "'");
    return load_spec(in, path);
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit digest as 16 lowercase hex characters.
inline std::string fnv1a_hex(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct RunManifest {
    std::string command;
    nlohmann::json config; ///< fully resolved configuration
    std::uint64_t master_seed = 0;
    std::string tool_version;
    std::string started;
    std::string finished;

    /// Digest of the canonical (key-sorted, compact) config dump.
    std::string config_digest() const { return fnv1a_hex(config.dump()); }

    nlohmann::json to_json() const
    {
        return {{"command", command},           {"config", config},
                {"config_digest", config_digest()}, {"master_seed", master_seed},
                {"tool_version", tool_version}, {"started", started},
                {"finished", finished}};
    }
};

/// Path of the manifest written next to a report.
inline std::string manifest_path(const std::string& report_path) { return report_path + ".manifest.json"; }

inline void write_manifest(const std::string& report_path, const RunManifest& m)
{
    std::ofstream out(manifest_path(report_path));
    if (!out) throw IngestionError("cannot write manifest for '" + report_path + "'");
    out << std::setw(2) << m.to_json() << '\n';
}

} // namespace mixar
