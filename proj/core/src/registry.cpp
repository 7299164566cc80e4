#include "dxe/registry.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <mutex>

#include "dxe/error.hpp"
#include "dxe/hash.hpp"
#include "dxe/text.hpp"

namespace dxe {

namespace {

constexpr std::array<std::string_view, 9> kBiasNames = {
    "Historical", "Representation", "Measurement", "Aggregation", "Learning",
    "Evaluation", "Deployment",     "HumanFactors", "Feedback"};

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<Enum>(i);
  }
  return std::nullopt;
}

constexpr std::array<std::string_view, 4> kRegionNames = {"US", "Europe", "China", "Other"};
constexpr std::array<std::string_view, 2> kTierNames = {"Free", "Paid"};
constexpr std::array<std::string_view, 4> kSizeNames = {"Small", "Medium", "Large", "Unknown"};

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidDescriptor, field + ": " + why);
}

bool valid_model_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
           c == '_' || c == '.';
  }) && id.front() != '.';
}

std::string scalar(const YAML::Node& doc, const char* key, bool required) {
  const auto node = doc[key];
  if (!node || node.IsNull()) {
    if (required) invalid(key, "missing");
    return {};
  }
  if (!node.IsScalar()) invalid(key, "expected a scalar");
  return node.as<std::string>();
}

}  // namespace

std::string_view to_string(Region r) { return kRegionNames[static_cast<std::size_t>(r)]; }
std::string_view to_string(CostTier t) { return kTierNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(SizeClass s) { return kSizeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(BiasCategory c) { return kBiasNames[static_cast<std::size_t>(c)]; }

std::optional<Region> parse_region(std::string_view s) { return parse_enum<Region>(s, kRegionNames); }
std::optional<CostTier> parse_cost_tier(std::string_view s) {
  return parse_enum<CostTier>(s, kTierNames);
}
std::optional<SizeClass> parse_size_class(std::string_view s) {
  return parse_enum<SizeClass>(s, kSizeNames);
}
std::optional<BiasCategory> parse_bias_category(std::string_view s) {
  return parse_enum<BiasCategory>(s, kBiasNames);
}

std::optional<Date> parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
  }
  y = (s[0] - '0') * 1000 + (s[1] - '0') * 100 + (s[2] - '0') * 10 + (s[3] - '0');
  m = static_cast<unsigned>((s[5] - '0') * 10 + (s[6] - '0'));
  d = static_cast<unsigned>((s[8] - '0') * 10 + (s[9] - '0'));
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Date today_utc() {
  return Date{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())};
}

void validate_descriptor(const ModelDescriptor& d, const Date& run_date) {
  if (!valid_model_id(d.model_id)) invalid("model_id", "must be 1-128 chars of [A-Za-z0-9._-]");
  if (d.display_name.empty()) invalid("display_name", "must not be empty");
  if (d.endpoint_ref.empty()) invalid("endpoint_ref", "must not be empty");
  if (static_cast<std::size_t>(d.origin_region) >= kRegionNames.size()) {
    invalid("origin_region", "not one of US, Europe, China, Other");
  }
  if (static_cast<std::size_t>(d.cost_tier) >= kTierNames.size()) invalid("cost_tier", "unknown");
  if (static_cast<std::size_t>(d.size_class) >= kSizeNames.size()) invalid("size_class", "unknown");
  if (d.release_date) {
    if (!d.release_date->ok()) invalid("release_date", "not a calendar date");
    if (std::chrono::sys_days{*d.release_date} > std::chrono::sys_days{run_date}) {
      invalid("release_date", format_date(*d.release_date) + " is in the future");
    }
  }
  for (const auto& a : d.bias_annotations) {
    if (static_cast<std::size_t>(a.category) >= kBiasNames.size()) {
      invalid("bias_annotations.category", "not a taxonomy category");
    }
  }
}

ModelDescriptor parse_model_document(std::string_view text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidDocument, std::string("model document: ") + e.what());
  }
  if (!doc.IsMap()) throw Error(ErrorCode::InvalidDocument, "model document: expected a mapping");
  const auto version = doc["schema_version"];
  if (!version) throw Error(ErrorCode::InvalidDocument, "model document: schema_version missing");
  if (version.as<std::string>() != std::to_string(kRegistrySchemaVersion)) {
    throw Error(ErrorCode::InvalidDocument,
                "model document: unsupported schema_version " + version.as<std::string>());
  }

  ModelDescriptor d;
  d.model_id = scalar(doc, "model_id", true);
  d.display_name = scalar(doc, "display_name", true);
  d.endpoint_ref = scalar(doc, "endpoint_ref", true);
  d.intended_scope = scalar(doc, "intended_scope", false);

  const auto region = scalar(doc, "origin_region", true);
  auto r = parse_region(region);
  if (!r) invalid("origin_region", "'" + region + "' is not one of US, Europe, China, Other");
  d.origin_region = *r;

  const auto tier = scalar(doc, "cost_tier", true);
  auto t = parse_cost_tier(tier);
  if (!t) invalid("cost_tier", "'" + tier + "' is not Free or Paid");
  d.cost_tier = *t;

  const auto size = scalar(doc, "size_class", false);
  if (!size.empty()) {
    auto s = parse_size_class(size);
    if (!s) invalid("size_class", "'" + size + "' is not Small, Medium, Large or Unknown");
    d.size_class = *s;
  }

  const auto release = scalar(doc, "release_date", false);
  if (!release.empty()) {
    d.release_date = parse_date(release);
    if (!d.release_date) invalid("release_date", "'" + release + "' is not YYYY-MM-DD");
  }

  if (const auto enabled = doc["enabled"]) {
    try {
      d.enabled = enabled.as<bool>();
    } catch (const YAML::Exception&) {
      invalid("enabled", "expected true or false");
    }
  }

  if (const auto annotations = doc["bias_annotations"]) {
    if (!annotations.IsSequence()) invalid("bias_annotations", "expected a list");
    for (const auto& item : annotations) {
      if (!item.IsMap()) invalid("bias_annotations", "each entry must be a mapping");
      BiasAnnotation a;
      const auto category = scalar(item, "category", true);
      auto c = parse_bias_category(category);
      if (!c) invalid("bias_annotations.category", "'" + category + "' is not a taxonomy category");
      a.category = *c;
      a.note = scalar(item, "note", false);
      auto evidence = scalar(item, "evidence_ref", false);
      if (!evidence.empty()) a.evidence_ref = std::move(evidence);
      d.bias_annotations.insert(std::move(a));
    }
  }
  return d;
}

std::string write_model_document(const ModelDescriptor& d) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << kRegistrySchemaVersion;
  out << YAML::Key << "model_id" << YAML::Value << d.model_id;
  out << YAML::Key << "display_name" << YAML::Value << d.display_name;
  out << YAML::Key << "endpoint_ref" << YAML::Value << d.endpoint_ref;
  out << YAML::Key << "origin_region" << YAML::Value << std::string(to_string(d.origin_region));
  if (d.release_date) {
    out << YAML::Key << "release_date" << YAML::Value << format_date(*d.release_date);
  }
  out << YAML::Key << "cost_tier" << YAML::Value << std::string(to_string(d.cost_tier));
  out << YAML::Key << "size_class" << YAML::Value << std::string(to_string(d.size_class));
  out << YAML::Key << "intended_scope" << YAML::Value << d.intended_scope;
  out << YAML::Key << "enabled" << YAML::Value << d.enabled;
  out << YAML::Key << "bias_annotations" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : d.bias_annotations) {
    out << YAML::BeginMap;
    out << YAML::Key << "category" << YAML::Value << std::string(to_string(a.category));
    out << YAML::Key << "note" << YAML::Value << a.note;
    if (a.evidence_ref) out << YAML::Key << "evidence_ref" << YAML::Value << *a.evidence_ref;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

bool ModelFilter::matches(const ModelDescriptor& d) const {
  if (enabled_only && !d.enabled) return false;
  if (regions && !regions->contains(d.origin_region)) return false;
  if (cost_tiers && !cost_tiers->contains(d.cost_tier)) return false;
  if (ids && !ids->contains(d.model_id)) return false;
  if (min_release_date) {
    if (!d.release_date) return false;
    if (std::chrono::sys_days{*d.release_date} < std::chrono::sys_days{*min_release_date}) return false;
  }
  return true;
}

std::vector<ModelDescriptor> apply_filter(const ModelFilter& filter,
                                          std::span<const ModelDescriptor> models) {
  std::vector<ModelDescriptor> out;
  for (const auto& d : models) {
    if (filter.matches(d)) out.push_back(d);
  }
  std::sort(out.begin(), out.end(),
            [](const ModelDescriptor& a, const ModelDescriptor& b) { return a.model_id < b.model_id; });
  return out;
}

std::map<Region, double> region_distribution(std::span<const ModelDescriptor> models) {
  if (models.empty()) throw Error(ErrorCode::EmptyInput, "region_distribution needs at least one model");
  std::map<Region, std::size_t> counts;
  for (const auto& d : models) ++counts[d.origin_region];
  std::map<Region, double> out;
  const auto total = static_cast<double>(models.size());
  for (const auto& [region, n] : counts) out[region] = static_cast<double>(n) / total;
  return out;
}

RegistrySnapshot::RegistrySnapshot(std::vector<ModelDescriptor> models) : models_(std::move(models)) {
  std::sort(models_.begin(), models_.end(),
            [](const ModelDescriptor& a, const ModelDescriptor& b) { return a.model_id < b.model_id; });
}

const ModelDescriptor* RegistrySnapshot::find(std::string_view model_id) const {
  const auto it = std::lower_bound(
      models_.begin(), models_.end(), model_id,
      [](const ModelDescriptor& d, std::string_view id) { return d.model_id < id; });
  if (it == models_.end() || it->model_id != model_id) return nullptr;
  return &*it;
}

RegistrySnapshot RegistrySnapshot::restrict_to(const std::set<std::string>& ids) const {
  std::vector<ModelDescriptor> kept;
  for (const auto& d : models_) {
    if (ids.contains(d.model_id)) kept.push_back(d);
  }
  return RegistrySnapshot(std::move(kept));
}

std::string RegistrySnapshot::digest() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& d : models_) h = fnv1a64(write_model_document(d), h);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Registry::Registry(Clock clock) : clock_(std::move(clock)) {}

Registry::Registry(std::filesystem::path storage_dir, Clock clock)
    : storage_dir_(std::move(storage_dir)), clock_(std::move(clock)) {
  std::filesystem::create_directories(*storage_dir_);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(*storage_dir_)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".model.yaml")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto d = parse_model_document(text::read_file(f.string()));
    validate_descriptor(d, clock_());
    if (models_.contains(d.model_id)) {
      throw Error(ErrorCode::DuplicateId, d.model_id + " defined twice under " + storage_dir_->string());
    }
    models_.emplace(d.model_id, std::move(d));
  }
}

std::string Registry::register_model(const ModelDescriptor& descriptor) {
  validate_descriptor(descriptor, clock_());
  std::unique_lock lock(mutex_);
  if (models_.contains(descriptor.model_id)) {
    throw Error(ErrorCode::DuplicateId, descriptor.model_id);
  }
  if (storage_dir_) {
    const auto path = *storage_dir_ / (descriptor.model_id + ".model.yaml");
    text::write_file_atomic(path.string(), write_model_document(descriptor));
  }
  models_.emplace(descriptor.model_id, descriptor);
  return descriptor.model_id;
}

std::optional<ModelDescriptor> Registry::find(std::string_view model_id) const {
  std::shared_lock lock(mutex_);
  const auto it = models_.find(model_id);
  if (it == models_.end()) return std::nullopt;
  return it->second;
}

std::vector<ModelDescriptor> Registry::select_models(const ModelFilter& filter) const {
  std::shared_lock lock(mutex_);
  std::vector<ModelDescriptor> out;
  for (const auto& [id, d] : models_) {
    if (filter.matches(d)) out.push_back(d);
  }
  return out;  // map order is ascending model_id
}

RegistrySnapshot Registry::snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<ModelDescriptor> all;
  all.reserve(models_.size());
  for (const auto& [id, d] : models_) all.push_back(d);
  return RegistrySnapshot(std::move(all));
}

std::size_t Registry::size() const {
  std::shared_lock lock(mutex_);
  return models_.size();
}

}  // namespace dxe
