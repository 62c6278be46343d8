#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qcnn/net.hpp"
#include "qcnn/schema.hpp"

namespace qcnn {

// ---------------------------------------------------------------------------
// Virtual full-factorial plans
// ---------------------------------------------------------------------------

struct SweptFactor {
  std::string factor;
  std::vector<FactorValue> levels;
};

struct ExperimentPlan {
  std::vector<SweptFactor> swept;
  FactorValues fixed;  // every non-swept factor
  double threshold = 0.5;

  std::size_t row_count() const;
};

struct SweepSpec {
  std::string factor;
  std::size_t level_count = 10;
  std::vector<FactorValue> levels;  // explicit levels override level_count
};

// How non-swept factors are fixed: explicit values first; remaining factors
// from `records` (mean for continuous, median for count factors). Discrete
// factors must be stated explicitly.
struct FixedPolicy {
  FactorValues explicit_values;
  const std::vector<ProductionRecord>* records = nullptr;
};

// Levels default to `level_count` equally spaced values across the schema
// range (both endpoints included). Throws SchemaError when a swept factor is
// not controllable.
ExperimentPlan build_full_factorial(const FactorSchema& schema, const std::vector<SweepSpec>& sweeps,
                                    const FixedPolicy& fixed, double threshold = 0.5);

struct GridRow {
  std::vector<FactorValue> levels;  // one per swept factor
  double probability = 0.0;
};

struct Marginal {
  std::string factor;
  std::vector<FactorValue> levels;
  std::vector<double> mean_probability;
};

struct ResponseSurface {
  std::vector<std::string> factors;
  std::vector<GridRow> rows;  // first swept factor varies slowest
  std::vector<Marginal> marginals;
  FactorValues fixed;
  double threshold = 0.5;
};

// Evaluates every grid row through the model's stored encoding. Throws
// DomainError naming the factor when a swept factor was pruned out of (or
// never belonged to) the model.
ResponseSurface evaluate_plan(const Mlp& mlp, const ExperimentPlan& plan);

void write_surface_csv(std::ostream& out, const ResponseSurface& surface);
void write_marginals_csv(std::ostream& out, const ResponseSurface& surface);
// Small SVG line chart of the marginal curves, one panel per factor.
void write_marginals_svg(std::ostream& out, const ResponseSurface& surface);

nlohmann::json plan_to_json(const ExperimentPlan& plan);
// Reads {"swept": [{"factor", "level_count" | "levels"}], "fixed", "threshold"};
// fixed values not given come from `records` as in FixedPolicy.
ExperimentPlan plan_from_json(const nlohmann::json& j, const FactorSchema& schema,
                              const std::vector<ProductionRecord>* records = nullptr);

// Fills factors missing from `values`: continuous ones at the model's
// standardization mean (clamped to range, rounded for count factors, range
// midpoint when the model has no mean), discrete ones at their first state.
FactorValues fill_from_model(const Mlp& mlp, const FactorSchema& schema, FactorValues values);

// ---------------------------------------------------------------------------
// Control limits and lot checks
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultResolution = 101;

struct FactorLimit {
  std::string factor;
  std::optional<Range> interval;  // nullopt = EMPTY
};

struct ControlLimits {
  std::vector<FactorLimit> limits;  // controllable continuous factors, schema order
  FactorValues context;
  double threshold = 0.5;
  std::size_t resolution = kDefaultResolution;

  const FactorLimit* find(std::string_view factor) const;
};

// For each controllable continuous factor independently: scan `resolution`
// equally spaced points of its range with all other factors at `context`;
// the limits are the widest contiguous run of points with predicted
// probability < threshold (earliest run on ties), or EMPTY.
ControlLimits compute_limits(const Mlp& mlp, const FactorSchema& schema, const FactorValues& context,
                             double threshold, std::size_t resolution = kDefaultResolution);

enum class LotMode { warning, limitation };
enum class FactorStatus { in_limits, out_of_limits_controllable, out_of_limits_non_controllable };
enum class LotVerdict { proceed, alert, adjust, reschedule };

std::string_view to_string(LotMode m);
std::string_view to_string(FactorStatus s);
std::string_view to_string(LotVerdict v);
LotMode parse_lot_mode(std::string_view text);

struct FactorCheck {
  std::string factor;
  FactorStatus status = FactorStatus::in_limits;
  std::optional<Range> target;  // limits for out-of-limit controllable factors
};

struct LotDecision {
  LotMode mode = LotMode::warning;
  double risk = 0.0;
  double threshold = 0.5;
  std::vector<FactorCheck> factors;  // schema order
  LotVerdict verdict = LotVerdict::proceed;
  std::vector<std::string> adjust;  // factors to move, for verdict adjust
};

// Warning mode: alert iff risk >= threshold.
// Limitation mode: limits are computed around the proposed lot and each
// controllable factor is checked against its interval. Factors with a safe
// interval that excludes the current value are listed for adjustment. When no
// such factor exists but some interval is EMPTY, the non-controllables are set
// to their reference values (`reference`, defaulting to the model's
// standardization means); if that reopens an EMPTY interval the lot is
// rescheduled, otherwise the EMPTY factors are listed for adjustment.
// Throws DomainError for values outside the schema ranges.
LotDecision check_lot(const Mlp& mlp, const FactorSchema& schema, const FactorValues& proposed, LotMode mode,
                      double threshold, std::size_t resolution = kDefaultResolution,
                      const FactorValues* reference = nullptr);

void to_json(nlohmann::json& j, const ControlLimits& l);
void to_json(nlohmann::json& j, const LotDecision& d);

}  // namespace qcnn
