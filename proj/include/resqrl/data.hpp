#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace resqrl {

enum class CovariateKind { Binary, Continuous };

/// Raised for malformed or inconsistent input data; `row` is 1-based (0 = not row specific).
class DataError : public std::runtime_error {
public:
    DataError(const std::string& field, std::size_t row, const std::string& what);
    const std::string& field() const { return field_; }
    std::size_t row() const { return row_; }

private:
    std::string field_;
    std::size_t row_;
};

/**
 * Ordered covariate names and kinds. Binary covariates are stored before
 * continuous ones; `make` reorders user input accordingly.
 */
class CovariateSchema {
public:
    CovariateSchema() = default;
    static CovariateSchema make(std::vector<std::string> names, std::vector<CovariateKind> kinds);

    std::size_t size() const { return names_.size(); }
    std::size_t n_binary() const { return n_binary_; }
    std::size_t n_continuous() const { return names_.size() - n_binary_; }
    const std::string& name(std::size_t j) const { return names_[j]; }
    CovariateKind kind(std::size_t j) const { return kinds_[j]; }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<std::size_t> index_of(const std::string& name) const;

    /// Stable fingerprint of names and kinds, printed as 16 hex digits.
    std::string hash() const;
    bool operator==(const CovariateSchema& o) const { return names_ == o.names_ && kinds_ == o.kinds_; }

private:
    std::vector<std::string> names_;
    std::vector<CovariateKind> kinds_;
    std::size_t n_binary_ = 0;
};

struct ObservedRecord {
    double time = 0.0;
    bool event = false;
    int exposure = 0;
    std::vector<std::optional<double>> covariates;  ///< nullopt marks a missing entry

    bool has_missing() const;
};

class Dataset {
public:
    Dataset(CovariateSchema schema, std::vector<ObservedRecord> records);

    const CovariateSchema& schema() const { return schema_; }
    const std::vector<ObservedRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const ObservedRecord& operator[](std::size_t i) const { return records_[i]; }

    std::size_t n_missing_entries() const;
    std::size_t n_censored() const;

private:
    CovariateSchema schema_;
    std::vector<ObservedRecord> records_;
};

struct CsvOptions {
    std::string missing_marker = "NA";
};

/**
 * Read `time,event,exposure,<covariates...>` CSV. Covariate columns are matched
 * to the schema by header name; empty cells and `missing_marker` are missing.
 */
Dataset load_dataset(const std::string& path, const CovariateSchema& schema, const CsvOptions& opt = {});
Dataset parse_dataset(const std::string& text, const CovariateSchema& schema, const CsvOptions& opt = {});
void save_dataset(const Dataset& data, const std::string& path, const CsvOptions& opt = {});
std::string format_dataset(const Dataset& data, const CsvOptions& opt = {});

/// Right-continuous step function on positive time knots.
struct StepSurvival {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<int> at_risk;

    double at(double t) const;
};

/// Product-limit estimator; at tied times events are counted before censorings.
StepSurvival kaplan_meier(const Dataset& data);
StepSurvival kaplan_meier(const std::vector<double>& times, const std::vector<bool>& events);

/// Format a double with the shortest representation that round-trips.
std::string format_double(double v);

}  // namespace resqrl
