#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "qcnn/schema.hpp"

namespace qcnn {

// ---------------------------------------------------------------------------
// CSV ingestion
//
// Header: record_id,timestamp,<factor columns in schema order>,<defect columns>
// Defect columns hold 0/1. Errors name the 1-based line number (the header is
// line 1) and the offending column.
// ---------------------------------------------------------------------------

std::vector<ProductionRecord> load_records(std::istream& in, const FactorSchema& schema);
std::vector<ProductionRecord> load_records(const std::string& path, const FactorSchema& schema);

// Writes records in the format read by load_records. Defect columns are the
// union of the records' defect names, sorted.
void write_records(std::ostream& out, const FactorSchema& schema, const std::vector<ProductionRecord>& records);

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

struct CleanRules {
  std::map<std::string, Range> bounds;  // per continuous factor, inclusive

  // Schema ranges widened by `widen` of their width on each side.
  static CleanRules from_schema(const FactorSchema& schema, double widen = 0.10);
};

struct Rejection {
  std::size_t row = 0;  // 0-based position in the input record list
  std::string factor;
  std::string reason;
};

struct CleanResult {
  std::vector<ProductionRecord> kept;
  std::vector<Rejection> log;
};

// Keeps records whose continuous values satisfy every bound; order preserved.
// A record is logged once, against the first factor (schema order) it violates.
CleanResult clean(const std::vector<ProductionRecord>& records, const FactorSchema& schema, const CleanRules& rules);

// `row,<n>,<factor>,<reason>` per line.
void write_rejection_log(std::ostream& out, const std::vector<Rejection>& log);

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

// One encoded input column: a continuous factor (no state) or one state of a
// discrete factor's one-hot group.
struct Column {
  std::string factor;
  std::optional<std::string> state;

  bool operator==(const Column&) const = default;
};

struct Standardization {
  double mean = 0.0;
  double stddev = 1.0;

  bool operator==(const Standardization&) const = default;
};

// Keyed by continuous factor name.
using NormParams = std::map<std::string, Standardization>;

// Maps natural-unit factor values to the network input vector and back.
struct InputEncoding {
  std::vector<Column> columns;
  NormParams norms;

  std::size_t width() const { return columns.size(); }
  // Column indices belonging to `factor`, in column order.
  std::vector<std::size_t> columns_of(const std::string& factor) const;
  // Factor names in column order, each once.
  std::vector<std::string> factor_names() const;

  // Throws SchemaError when a factor needed by a column is missing.
  Eigen::VectorXd encode(const FactorValues& values) const;
  // Inverse of encode. Throws DomainError when a one-hot group is not
  // exactly one-hot.
  FactorValues decode(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool operator==(const InputEncoding&) const = default;
};

void to_json(nlohmann::json& j, const InputEncoding& enc);
void from_json(const nlohmann::json& j, InputEncoding& enc);

// Column layout for a schema: factors in schema order; continuous factors take
// one column, discrete factors one column per state.
std::vector<Column> column_layout(const FactorSchema& schema);

struct EncodedDataset {
  Eigen::MatrixXd inputs;   // N x n0
  Eigen::VectorXd targets;  // N, values in {0, 1}
  InputEncoding encoding;
  std::string defect_name;
  std::vector<std::string> record_ids;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  // Rows `idx` in the given order.
  EncodedDataset subset(const std::vector<std::size_t>& idx) const;
};

// Fits standardization on these records, then encodes them. Throws
// DomainError naming the factor when a continuous column has zero variance.
EncodedDataset encode(const std::vector<ProductionRecord>& records, const FactorSchema& schema,
                      const std::string& defect_name);
// Encodes with previously fitted standardization.
EncodedDataset encode(const std::vector<ProductionRecord>& records, const FactorSchema& schema,
                      const std::string& defect_name, const NormParams& norms);

NormParams fit_norms(const std::vector<ProductionRecord>& records, const FactorSchema& schema);

// ---------------------------------------------------------------------------
// Identification / validation split
// ---------------------------------------------------------------------------

enum class SplitMode { chronological, seeded_random };

struct SplitSpec {
  SplitMode mode = SplitMode::chronological;
  std::size_t identification_count = 0;
  std::uint64_t seed = 0;
};

// Row indices of each part, ascending. Chronological mode assumes rows are
// already in time order and keeps the first identification_count rows.
// Throws DomainError unless 0 < identification_count < n.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, const SplitSpec& spec);

std::pair<EncodedDataset, EncodedDataset> split(const EncodedDataset& dataset, const SplitSpec& spec);

// Records sorted by timestamp (stable), for chronological splitting.
std::vector<ProductionRecord> sort_chronologically(std::vector<ProductionRecord> records);

}  // namespace qcnn
