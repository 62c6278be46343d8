#include "qcnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>

#include "qcnn/error.hpp"
#include "qcnn/random.hpp"

namespace qcnn {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return v;
}

bool valid_timestamp(const std::string& s) {
  static const std::regex iso(R"(\d{4}-\d{2}-\d{2}(T\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?)");
  return std::regex_match(s, iso);
}

std::string where(std::size_t line, const std::string& column) {
  return "row " + std::to_string(line) + ", column '" + column + "'";
}

std::string format_number(double v) { return json(v).dump(); }

}  // namespace

std::vector<ProductionRecord> load_records(std::istream& in, const FactorSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV input: missing header row");
  const auto header = split_csv_line(line);
  const std::size_t n_factors = schema.size();
  if (header.size() < 2 + n_factors || trim(header[0]) != "record_id" || trim(header[1]) != "timestamp") {
    throw ParseError("row 1: header must start with record_id,timestamp followed by the schema factors");
  }
  for (std::size_t i = 0; i < n_factors; ++i) {
    if (trim(header[2 + i]) != schema.factors()[i].name) {
      throw ParseError("row 1, column " + std::to_string(3 + i) + ": expected factor '" + schema.factors()[i].name +
                       "', found '" + trim(header[2 + i]) + "'");
    }
  }
  std::vector<std::string> defects;
  for (std::size_t i = 2 + n_factors; i < header.size(); ++i) defects.push_back(trim(header[i]));

  std::vector<ProductionRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line) == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(cells.size()));
    }
    ProductionRecord rec;
    rec.record_id = trim(cells[0]);
    if (rec.record_id.empty()) throw ParseError(where(line_no, "record_id") + ": empty record id");
    rec.timestamp = trim(cells[1]);
    if (!valid_timestamp(rec.timestamp)) {
      throw ParseError(where(line_no, "timestamp") + ": '" + rec.timestamp + "' is not an ISO-8601 datetime");
    }
    for (std::size_t i = 0; i < n_factors; ++i) {
      const auto& def = schema.factors()[i];
      const std::string cell = trim(cells[2 + i]);
      if (def.is_continuous()) {
        auto v = parse_double(cell);
        if (!v || !std::isfinite(*v)) {
          throw ParseError(where(line_no, def.name) + ": '" + cell + "' is not a finite number");
        }
        rec.factor_values[def.name] = *v;
      } else {
        if (!def.has_state(cell)) {
          throw ParseError(where(line_no, def.name) + ": unknown state '" + cell + "'");
        }
        rec.factor_values[def.name] = cell;
      }
    }
    for (std::size_t i = 0; i < defects.size(); ++i) {
      const std::string cell = trim(cells[2 + n_factors + i]);
      if (cell != "0" && cell != "1") {
        throw ParseError(where(line_no, defects[i]) + ": defect flag must be 0 or 1, found '" + cell + "'");
      }
      rec.defect_flags[defects[i]] = cell == "1";
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ProductionRecord> load_records(const std::string& path, const FactorSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  return load_records(in, schema);
}

void write_records(std::ostream& out, const FactorSchema& schema, const std::vector<ProductionRecord>& records) {
  std::set<std::string> defect_set;
  for (const auto& r : records) {
    for (const auto& [name, flag] : r.defect_flags) defect_set.insert(name);
  }
  out << "record_id,timestamp";
  for (const auto& f : schema.factors()) out << ',' << f.name;
  for (const auto& d : defect_set) out << ',' << d;
  out << '\n';
  for (const auto& r : records) {
    out << r.record_id << ',' << r.timestamp;
    for (const auto& f : schema.factors()) {
      const auto& v = r.factor_values.at(f.name);
      out << ',';
      if (const auto* s = std::get_if<std::string>(&v)) {
        out << *s;
      } else {
        out << format_number(std::get<double>(v));
      }
    }
    for (const auto& d : defect_set) {
      auto it = r.defect_flags.find(d);
      out << ',' << ((it != r.defect_flags.end() && it->second) ? '1' : '0');
    }
    out << '\n';
  }
}

CleanRules CleanRules::from_schema(const FactorSchema& schema, double widen) {
  CleanRules rules;
  for (const auto& f : schema.factors()) {
    if (!f.is_continuous()) continue;
    const double pad = widen * f.range.width();
    rules.bounds[f.name] = {f.range.min - pad, f.range.max + pad};
  }
  return rules;
}

CleanResult clean(const std::vector<ProductionRecord>& records, const FactorSchema& schema, const CleanRules& rules) {
  CleanResult result;
  for (std::size_t row = 0; row < records.size(); ++row) {
    const auto& rec = records[row];
    std::optional<Rejection> rejection;
    for (const auto& f : schema.factors()) {
      auto bound = rules.bounds.find(f.name);
      if (bound == rules.bounds.end()) continue;
      const double v = numeric_value(rec.factor_values, f.name);
      if (!bound->second.contains(v)) {
        rejection = Rejection{row, f.name,
                              "value " + format_number(v) + " outside [" + format_number(bound->second.min) + ", " +
                                  format_number(bound->second.max) + "]"};
        break;
      }
    }
    if (rejection) {
      result.log.push_back(std::move(*rejection));
    } else {
      result.kept.push_back(rec);
    }
  }
  return result;
}

void write_rejection_log(std::ostream& out, const std::vector<Rejection>& log) {
  for (const auto& r : log) out << "row," << r.row << ',' << r.factor << ',' << r.reason << '\n';
}

std::vector<std::size_t> InputEncoding::columns_of(const std::string& factor) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].factor == factor) out.push_back(c);
  }
  return out;
}

std::vector<std::string> InputEncoding::factor_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (out.empty() || out.back() != c.factor) out.push_back(c.factor);
  }
  return out;
}

Eigen::VectorXd InputEncoding::encode(const FactorValues& values) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    if (col.state) {
      x[static_cast<Eigen::Index>(c)] = state_value(values, col.factor) == *col.state ? 1.0 : 0.0;
    } else {
      const auto& norm = norms.at(col.factor);
      x[static_cast<Eigen::Index>(c)] = (numeric_value(values, col.factor) - norm.mean) / norm.stddev;
    }
  }
  return x;
}

FactorValues InputEncoding::decode(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != columns.size()) {
    throw DimensionError("decode: expected " + std::to_string(columns.size()) + " columns, got " +
                         std::to_string(x.size()));
  }
  FactorValues out;
  std::map<std::string, int> hot_count;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    const double v = x[static_cast<Eigen::Index>(c)];
    if (col.state) {
      hot_count.try_emplace(col.factor, 0);
      if (v == 1.0) {
        out[col.factor] = *col.state;
        ++hot_count[col.factor];
      } else if (v != 0.0) {
        throw DomainError("decode: one-hot column for '" + col.factor + "' holds " + format_number(v));
      }
    } else {
      const auto& norm = norms.at(col.factor);
      out[col.factor] = v * norm.stddev + norm.mean;
    }
  }
  for (const auto& [factor, count] : hot_count) {
    if (count != 1) throw DomainError("decode: one-hot group for '" + factor + "' is not exactly one-hot");
  }
  return out;
}

void to_json(json& j, const InputEncoding& enc) {
  j = json::object();
  json cols = json::array();
  for (const auto& c : enc.columns) {
    cols.push_back({{"factor", c.factor}, {"state", c.state ? json(*c.state) : json(nullptr)}});
  }
  j["column_map"] = std::move(cols);
  json norms = json::object();
  for (const auto& [name, n] : enc.norms) norms[name] = {{"mean", n.mean}, {"stddev", n.stddev}};
  j["norm_params"] = std::move(norms);
}

void from_json(const json& j, InputEncoding& enc) {
  enc = InputEncoding{};
  for (const auto& c : j.at("column_map")) {
    Column col;
    col.factor = c.at("factor").get<std::string>();
    if (!c.at("state").is_null()) col.state = c.at("state").get<std::string>();
    enc.columns.push_back(std::move(col));
  }
  for (const auto& [name, n] : j.at("norm_params").items()) {
    enc.norms[name] = {n.at("mean").get<double>(), n.at("stddev").get<double>()};
  }
}

std::vector<Column> column_layout(const FactorSchema& schema) {
  std::vector<Column> cols;
  for (const auto& f : schema.factors()) {
    if (f.is_continuous()) {
      cols.push_back({f.name, std::nullopt});
    } else {
      for (const auto& s : f.states) cols.push_back({f.name, s});
    }
  }
  return cols;
}

EncodedDataset EncodedDataset::subset(const std::vector<std::size_t>& idx) const {
  EncodedDataset out;
  out.encoding = encoding;
  out.defect_name = defect_name;
  out.inputs.resize(static_cast<Eigen::Index>(idx.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(idx[k]);
    out.inputs.row(static_cast<Eigen::Index>(k)) = inputs.row(r);
    out.targets[static_cast<Eigen::Index>(k)] = targets[r];
    if (!record_ids.empty()) out.record_ids.push_back(record_ids[idx[k]]);
  }
  return out;
}

NormParams fit_norms(const std::vector<ProductionRecord>& records, const FactorSchema& schema) {
  NormParams norms;
  if (records.empty()) throw DomainError("cannot fit normalization on an empty record set");
  const double n = static_cast<double>(records.size());
  for (const auto& f : schema.factors()) {
    if (!f.is_continuous()) continue;
    double sum = 0.0;
    for (const auto& r : records) sum += numeric_value(r.factor_values, f.name);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : records) {
      const double d = numeric_value(r.factor_values, f.name) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) throw DomainError("factor '" + f.name + "' has zero variance; cannot standardize");
    norms[f.name] = {mean, sd};
  }
  return norms;
}

EncodedDataset encode(const std::vector<ProductionRecord>& records, const FactorSchema& schema,
                      const std::string& defect_name) {
  return encode(records, schema, defect_name, fit_norms(records, schema));
}

EncodedDataset encode(const std::vector<ProductionRecord>& records, const FactorSchema& schema,
                      const std::string& defect_name, const NormParams& norms) {
  EncodedDataset ds;
  ds.defect_name = defect_name;
  ds.encoding.columns = column_layout(schema);
  for (const auto& f : schema.factors()) {
    if (!f.is_continuous()) continue;
    auto it = norms.find(f.name);
    if (it == norms.end()) throw SchemaError("no normalization parameters for factor '" + f.name + "'");
    if (!(it->second.stddev > 0.0)) throw DomainError("factor '" + f.name + "' has non-positive stddev");
    ds.encoding.norms[f.name] = it->second;
  }
  const auto n = static_cast<Eigen::Index>(records.size());
  ds.inputs.resize(n, static_cast<Eigen::Index>(ds.encoding.width()));
  ds.targets.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& rec = records[static_cast<std::size_t>(k)];
    schema.validate(rec.factor_values, false);
    auto flag = rec.defect_flags.find(defect_name);
    if (flag == rec.defect_flags.end()) {
      throw SchemaError("record '" + rec.record_id + "' has no defect column '" + defect_name + "'");
    }
    ds.inputs.row(k) = ds.encoding.encode(rec.factor_values).transpose();
    ds.targets[k] = flag->second ? 1.0 : 0.0;
    ds.record_ids.push_back(rec.record_id);
  }
  return ds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, const SplitSpec& spec) {
  if (spec.identification_count == 0 || spec.identification_count >= n) {
    throw DomainError("identification_count must lie in (0, " + std::to_string(n) + "), got " +
                      std::to_string(spec.identification_count));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (spec.mode == SplitMode::seeded_random) {
    Rng rng(spec.seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  }
  std::vector<std::size_t> ident(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.identification_count));
  std::vector<std::size_t> valid(order.begin() + static_cast<std::ptrdiff_t>(spec.identification_count), order.end());
  std::sort(ident.begin(), ident.end());
  std::sort(valid.begin(), valid.end());
  return {std::move(ident), std::move(valid)};
}

std::pair<EncodedDataset, EncodedDataset> split(const EncodedDataset& dataset, const SplitSpec& spec) {
  auto [ident, valid] = split_indices(dataset.size(), spec);
  return {dataset.subset(ident), dataset.subset(valid)};
}

std::vector<ProductionRecord> sort_chronologically(std::vector<ProductionRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const ProductionRecord& a, const ProductionRecord& b) { return a.timestamp < b.timestamp; });
  return records;
}

}  // namespace qcnn
