#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Catalog of ensemble members: who each model is, where it comes from, and
// which documented biases it carries. Bias profiles are declarative
// assertions with evidence references, never learned quantities.
namespace dxe {

enum class Region { US, Europe, China, Other };
enum class CostTier { Free, Paid };
enum class SizeClass { Small, Medium, Large, Unknown };

// The nine categories of the clinical-AI bias taxonomy. Closed set.
enum class BiasCategory {
  Historical,
  Representation,
  Measurement,
  Aggregation,
  Learning,
  Evaluation,
  Deployment,
  HumanFactors,
  Feedback,
};

inline constexpr std::array<Region, 4> kAllRegions = {Region::US, Region::Europe, Region::China,
                                                      Region::Other};

std::string_view to_string(Region r);
std::string_view to_string(CostTier t);
std::string_view to_string(SizeClass s);
std::string_view to_string(BiasCategory c);

// Exact, case-sensitive parsing of the enum spellings above.
std::optional<Region> parse_region(std::string_view s);
std::optional<CostTier> parse_cost_tier(std::string_view s);
std::optional<SizeClass> parse_size_class(std::string_view s);
std::optional<BiasCategory> parse_bias_category(std::string_view s);

using Date = std::chrono::year_month_day;

// ISO "YYYY-MM-DD"; nullopt for malformed or non-existent calendar dates.
std::optional<Date> parse_date(std::string_view s);
std::string format_date(const Date& d);
Date today_utc();

struct BiasAnnotation {
  BiasCategory category = BiasCategory::Historical;
  std::string note;
  std::optional<std::string> evidence_ref;

  bool operator==(const BiasAnnotation&) const = default;
  auto operator<=>(const BiasAnnotation&) const = default;
};

struct ModelDescriptor {
  std::string model_id;
  std::string display_name;
  std::string endpoint_ref;
  Region origin_region = Region::Other;
  std::optional<Date> release_date;
  CostTier cost_tier = CostTier::Free;
  SizeClass size_class = SizeClass::Unknown;
  std::string intended_scope;
  std::set<BiasAnnotation> bias_annotations;
  bool enabled = true;

  bool operator==(const ModelDescriptor&) const = default;
};

// Throws Error(InvalidDescriptor) naming the failing field.
void validate_descriptor(const ModelDescriptor& d, const Date& run_date);

// Registry document codec: a versioned YAML document per model.
inline constexpr int kRegistrySchemaVersion = 1;
ModelDescriptor parse_model_document(std::string_view text);
std::string write_model_document(const ModelDescriptor& d);

// Every supplied predicate must hold. `enabled_only` defaults to true so an
// empty filter selects all enabled models.
struct ModelFilter {
  std::optional<std::set<Region>> regions;
  std::optional<std::set<CostTier>> cost_tiers;
  bool enabled_only = true;
  std::optional<Date> min_release_date;
  std::optional<std::set<std::string>> ids;

  bool matches(const ModelDescriptor& d) const;
};

// Filters a descriptor list, result ordered ascending by model_id.
std::vector<ModelDescriptor> apply_filter(const ModelFilter& filter,
                                          std::span<const ModelDescriptor> models);

// Throws Error(EmptyInput) on an empty list. Only regions present appear.
std::map<Region, double> region_distribution(std::span<const ModelDescriptor> models);

// Immutable view of the descriptor set at one instant. Runs keep their own
// snapshot so later registry edits never rewrite history.
class RegistrySnapshot {
 public:
  RegistrySnapshot() = default;
  explicit RegistrySnapshot(std::vector<ModelDescriptor> models);

  const std::vector<ModelDescriptor>& models() const { return models_; }
  const ModelDescriptor* find(std::string_view model_id) const;
  bool contains(std::string_view model_id) const { return find(model_id) != nullptr; }

  // Snapshot restricted to the given ids (unknown ids ignored).
  RegistrySnapshot restrict_to(const std::set<std::string>& ids) const;

  // Stable content digest ("fnv1a64:<hex>") used as a report reference.
  std::string digest() const;

  bool operator==(const RegistrySnapshot&) const = default;

 private:
  std::vector<ModelDescriptor> models_;  // ascending model_id
};

// Thread-safe registry. Reads take a shared lock and see a consistent
// snapshot; registrations are serialized through the unique lock. When
// constructed with a directory, each registration is written as
// `<model_id>.model.yaml` before it becomes visible.
class Registry {
 public:
  using Clock = std::function<Date()>;

  explicit Registry(Clock clock = today_utc);
  // Loads every `*.model.yaml` in the directory (created if missing).
  explicit Registry(std::filesystem::path storage_dir, Clock clock = today_utc);

  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  std::string register_model(const ModelDescriptor& descriptor);

  std::optional<ModelDescriptor> find(std::string_view model_id) const;
  std::vector<ModelDescriptor> select_models(const ModelFilter& filter) const;
  RegistrySnapshot snapshot() const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> storage_dir_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, ModelDescriptor, std::less<>> models_;
};

}  // namespace dxe
