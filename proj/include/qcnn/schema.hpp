#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace qcnn {

enum class FactorKind { continuous, discrete };
enum class FactorRole { controllable, non_controllable, protocol };

std::string_view to_string(FactorKind kind);
std::string_view to_string(FactorRole role);
FactorRole parse_role(std::string_view text);

struct Range {
  double min = 0.0;
  double max = 0.0;

  bool contains(double v) const { return v >= min && v <= max; }
  double width() const { return max - min; }
  bool operator==(const Range&) const = default;
};

struct FactorDef {
  std::string name;
  FactorKind kind = FactorKind::continuous;
  FactorRole role = FactorRole::controllable;
  Range range;                      // continuous only
  std::vector<std::string> states;  // discrete only
  bool count = false;               // continuous factor that takes integer values

  bool is_continuous() const { return kind == FactorKind::continuous; }
  bool has_state(std::string_view label) const;

  static FactorDef continuous(std::string name, FactorRole role, Range range, bool count = false);
  static FactorDef discrete(std::string name, FactorRole role, std::vector<std::string> states);

  bool operator==(const FactorDef&) const = default;
};

// Value of one factor in natural units: a number for continuous factors, a
// state label for discrete ones.
using FactorValue = std::variant<double, std::string>;
using FactorValues = std::map<std::string, FactorValue>;

std::string format_value(const FactorValue& v);

// Ordered, validated list of factor declarations.
class FactorSchema {
 public:
  FactorSchema() = default;
  // Throws SchemaError when names collide, a discrete factor has fewer than
  // two (or duplicate) states, or a continuous range is empty.
  explicit FactorSchema(std::vector<FactorDef> factors);

  const std::vector<FactorDef>& factors() const { return factors_; }
  std::size_t size() const { return factors_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  // Throws SchemaError for unknown names.
  const FactorDef& at(std::string_view name) const;

  std::vector<std::string> names_with_role(FactorRole role) const;

  // Checks that `values` gives every factor exactly once, with finite numbers
  // for continuous factors and declared labels for discrete ones. When
  // `check_range` is set continuous values must also lie inside the range.
  void validate(const FactorValues& values, bool check_range) const;

  // Stable 16-hex-digit FNV-1a digest of the canonical JSON form.
  std::string fingerprint() const;

  bool operator==(const FactorSchema&) const = default;

 private:
  std::vector<FactorDef> factors_;
};

void to_json(nlohmann::json& j, const FactorDef& def);
void from_json(const nlohmann::json& j, FactorDef& def);
void to_json(nlohmann::json& j, const FactorSchema& schema);
void from_json(const nlohmann::json& j, FactorSchema& schema);

FactorSchema load_schema(const std::string& path);

nlohmann::json values_to_json(const FactorValues& values);
// Parses `{"name": number | "label", ...}` against the schema. Discrete
// values may be given as strings or integers (converted to their decimal
// label).
FactorValues values_from_json(const nlohmann::json& j, const FactorSchema& schema);

// One production lot: its settings and which defects were observed.
struct ProductionRecord {
  std::string record_id;
  std::string timestamp;  // ISO-8601, e.g. 2012-02-01T08:00:00Z
  FactorValues factor_values;
  std::map<std::string, bool> defect_flags;

  bool operator==(const ProductionRecord&) const = default;
};

double numeric_value(const FactorValues& values, const std::string& factor);
const std::string& state_value(const FactorValues& values, const std::string& factor);

}  // namespace qcnn
