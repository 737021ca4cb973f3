#include "resqrl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "resqrl/rng.hpp"

namespace resqrl {

namespace {

std::string describe(const std::string& field, std::size_t row, const std::string& what) {
    std::string s = "field '" + field + "'";
    if (row > 0) s += " at row " + std::to_string(row);
    return s + ": " + what;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

int parse_flag(const std::string& s, const std::string& field, std::size_t row) {
    auto v = parse_number(s);
    if (!v || (*v != 0.0 && *v != 1.0)) throw DataError(field, row, "expected 0 or 1, got '" + s + "'");
    return static_cast<int>(*v);
}

void validate_record(const ObservedRecord& r, const CovariateSchema& schema, std::size_t row) {
    if (!(r.time > 0.0) || !std::isfinite(r.time)) throw DataError("time", row, "time must be positive and finite");
    if (r.exposure != 0 && r.exposure != 1) throw DataError("exposure", row, "exposure must be 0 or 1");
    if (r.covariates.size() != schema.size())
        throw DataError("covariates", row, "expected " + std::to_string(schema.size()) + " covariates");
    for (std::size_t j = 0; j < schema.size(); ++j) {
        if (!r.covariates[j]) continue;
        const double v = *r.covariates[j];
        if (schema.kind(j) == CovariateKind::Binary) {
            if (v != 0.0 && v != 1.0) throw DataError(schema.name(j), row, "binary covariate must be 0 or 1");
        } else if (!std::isfinite(v)) {
            throw DataError(schema.name(j), row, "continuous covariate must be finite");
        }
    }
}

}  // namespace

DataError::DataError(const std::string& field, std::size_t row, const std::string& what)
    : std::runtime_error(describe(field, row, what)), field_(field), row_(row) {}

CovariateSchema CovariateSchema::make(std::vector<std::string> names, std::vector<CovariateKind> kinds) {
    if (names.size() != kinds.size()) throw DataError("schema", 0, "names and kinds differ in length");
    std::map<std::string, int> seen;
    for (const auto& n : names) {
        if (n.empty()) throw DataError("schema", 0, "empty covariate name");
        if (n == "time" || n == "event" || n == "exposure") throw DataError(n, 0, "reserved column name");
        if (n.find(',') != std::string::npos) throw DataError(n, 0, "covariate name contains a comma");
        if (seen[n]++) throw DataError(n, 0, "duplicate covariate name");
    }
    CovariateSchema s;
    for (int pass = 0; pass < 2; ++pass) {
        const CovariateKind want = pass == 0 ? CovariateKind::Binary : CovariateKind::Continuous;
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (kinds[j] != want) continue;
            s.names_.push_back(names[j]);
            s.kinds_.push_back(kinds[j]);
        }
        if (pass == 0) s.n_binary_ = s.names_.size();
    }
    return s;
}

std::optional<std::size_t> CovariateSchema::index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
}

std::string CovariateSchema::hash() const {
    std::uint64_t h = fnv1a64("resqrl-schema-v1");
    for (std::size_t j = 0; j < names_.size(); ++j) {
        h = fnv1a64(names_[j], h);
        h = fnv1a64(kinds_[j] == CovariateKind::Binary ? "\x1f" "b;" : "\x1f" "c;", h);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool ObservedRecord::has_missing() const {
    return std::any_of(covariates.begin(), covariates.end(), [](const auto& v) { return !v.has_value(); });
}

Dataset::Dataset(CovariateSchema schema, std::vector<ObservedRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
    if (records_.size() < 2) throw DataError("records", 0, "at least two records are required");
    for (std::size_t i = 0; i < records_.size(); ++i) validate_record(records_[i], schema_, i + 1);
    for (std::size_t j = 0; j < schema_.size(); ++j) {
        bool any = false;
        for (const auto& r : records_) any = any || r.covariates[j].has_value();
        if (!any) throw DataError(schema_.name(j), 0, "covariate is missing in every record");
    }
}

std::size_t Dataset::n_missing_entries() const {
    std::size_t n = 0;
    for (const auto& r : records_)
        for (const auto& v : r.covariates) n += !v.has_value();
    return n;
}

std::size_t Dataset::n_censored() const {
    return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [](const auto& r) { return !r.event; }));
}

Dataset parse_dataset(const std::string& text, const CovariateSchema& schema, const CsvOptions& opt) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("header", 0, "empty input");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "time" || header[1] != "event" || header[2] != "exposure")
        throw DataError("header", 0, "header must start with time,event,exposure");

    std::vector<std::size_t> column_of(schema.size(), 0);
    std::vector<bool> found(schema.size(), false);
    for (std::size_t c = 3; c < header.size(); ++c) {
        auto j = schema.index_of(header[c]);
        if (!j) throw DataError(header[c], 0, "column not in the covariate schema");
        if (found[*j]) throw DataError(header[c], 0, "duplicate column");
        found[*j] = true;
        column_of[*j] = c;
    }
    for (std::size_t j = 0; j < schema.size(); ++j)
        if (!found[j]) throw DataError(schema.name(j), 0, "column missing from header");

    std::vector<ObservedRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto f = split_csv(line);
        if (f.size() != header.size())
            throw DataError("row", row, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        ObservedRecord r;
        auto t = parse_number(f[0]);
        if (!t) throw DataError("time", row, "not a number: '" + f[0] + "'");
        r.time = *t;
        r.event = parse_flag(f[1], "event", row) == 1;
        r.exposure = parse_flag(f[2], "exposure", row);
        r.covariates.resize(schema.size());
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const std::string& cell = f[column_of[j]];
            if (cell.empty() || cell == opt.missing_marker) continue;
            auto v = parse_number(cell);
            if (!v) throw DataError(schema.name(j), row, "not a number: '" + cell + "'");
            r.covariates[j] = *v;
        }
        validate_record(r, schema, row);
        records.push_back(std::move(r));
    }
    return Dataset(schema, std::move(records));
}

Dataset load_dataset(const std::string& path, const CovariateSchema& schema, const CsvOptions& opt) {
    std::ifstream f(path);
    if (!f) throw DataError("path", 0, "cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_dataset(ss.str(), schema, opt);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_dataset(const Dataset& data, const CsvOptions& opt) {
    std::string out = "time,event,exposure";
    for (const auto& n : data.schema().names()) out += "," + n;
    out += "\n";
    for (const auto& r : data.records()) {
        out += format_double(r.time);
        out += r.event ? ",1" : ",0";
        out += r.exposure ? ",1" : ",0";
        for (const auto& v : r.covariates) out += "," + (v ? format_double(*v) : opt.missing_marker);
        out += "\n";
    }
    return out;
}

void save_dataset(const Dataset& data, const std::string& path, const CsvOptions& opt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("path", 0, "cannot write '" + path + "'");
    f << format_dataset(data, opt);
}

double StepSurvival::at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

StepSurvival kaplan_meier(const std::vector<double>& times, const std::vector<bool>& events) {
    if (times.size() != events.size()) throw std::invalid_argument("kaplan_meier: length mismatch");
    if (times.empty()) throw std::invalid_argument("kaplan_meier: no records");
    for (double t : times)
        if (!(t > 0.0)) throw std::invalid_argument("kaplan_meier: times must be positive");
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });

    StepSurvival out;
    double s = 1.0;
    std::size_t i = 0;
    int remaining = static_cast<int>(times.size());
    while (i < order.size()) {
        const double t = times[order[i]];
        int deaths = 0, total = 0;
        while (i < order.size() && times[order[i]] == t) {
            deaths += events[order[i]] ? 1 : 0;
            ++total;
            ++i;
        }
        // deaths leave before same-time censorings are removed
        if (deaths > 0) s *= 1.0 - static_cast<double>(deaths) / remaining;
        out.times.push_back(t);
        out.values.push_back(s);
        out.at_risk.push_back(remaining);
        remaining -= total;
    }
    return out;
}

StepSurvival kaplan_meier(const Dataset& data) {
    std::vector<double> t;
    std::vector<bool> d;
    for (const auto& r : data.records()) {
        t.push_back(r.time);
        d.push_back(r.event);
    }
    return kaplan_meier(t, d);
}

}  // namespace resqrl
