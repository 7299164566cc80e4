#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "dxe/casemodel.hpp"
#include "dxe/gateway.hpp"
#include "dxe/registry.hpp"
#include "dxe/synthesis.hpp"

// Deterministic simulated model population. Every draw comes from a
// SplitMix64 stream seeded by hash(seed, seed_offset, case_id), so a
// response depends only on (profile, case, seed) and never on scheduling.
namespace dxe {

struct DiseaseEntry {
  std::string label;
  std::vector<std::string> icd10_codes;
};

// Everything a simulated model can say: the disease catalog (keyed by
// canonical key), fabricated labels for hallucinations, and sentence banks
// for markers, treatment stance and demographic anchors.
struct SimWorld {
  std::map<std::string, DiseaseEntry> catalog;
  std::vector<std::string> fabricated_labels;
  std::vector<std::string> uncertainty_phrases;
  std::vector<std::string> confidence_phrases;
  std::vector<std::string> aggressive_sentences;
  std::vector<std::string> conservative_sentences;
  std::map<std::string, std::vector<std::string>> anchor_sentences;  // anchor name -> sentences

  // Built-in marker phrases and sentence banks, empty catalog.
  static SimWorld defaults();
};

struct SimModelProfile {
  std::string model_id;
  Region origin_region = Region::Other;
  std::map<std::string, double> disease_priors;
  std::map<std::string, double> regional_boost;  // applied when the case has a "region:" tag
  std::map<std::string, double> temporal_boost;  // these keys join every case's support
  double hallucination_rate = 0.0;
  double uncertainty_rate = 1.0;  // expected marker sentences per response
  double confidence_rate = 0.5;
  double aggressive_rate = 0.5;   // chance the treatment sentence is aggressive
  double anchor_rate = 1.0;       // expected sentences per "anchor:<name>" case tag
  int top_k = 5;
  std::uint64_t seed_offset = 0;
  std::shared_ptr<const SimWorld> world;
};

// Throws Error(ProfileInvalid).
void validate_profile(const SimModelProfile& p);

struct SimulatedOutput {
  std::string text;
  std::optional<std::string> fabricated_label;  // ground truth, never parsed from text
  std::int64_t latency_ms = 0;
};

// Case tags "dx:<key>=<weight>" give per-case weights. A key is sampled
// with weight case_weight * prior * regional_boost * temporal_boost over
// keys with a positive prior that the case tags or the temporal boost
// names (case weight 1 for the latter). Throws Error(ProfileInvalid) for
// an invalid profile or a case with no support under the profile.
SimulatedOutput simulate_response_detailed(const SimModelProfile& profile, const ClinicalCase& c,
                                           std::uint64_t seed);
std::string simulate_response(const SimModelProfile& profile, const ClinicalCase& c, std::uint64_t seed);

std::uint64_t sim_stream_seed(std::uint64_t seed, std::uint64_t seed_offset, std::string_view case_id);

struct SimMember {
  ModelDescriptor descriptor;
  SimModelProfile profile;
};

struct SimPopulation {
  std::shared_ptr<const SimWorld> world;
  std::vector<SimMember> members;  // ascending model_id

  std::vector<ModelDescriptor> descriptors() const;
  std::vector<SimModelProfile> profiles() const;
};

// Expands a population document (YAML). Model ids are
// "sim-<region>-<nn>", numbered per region in document order. Throws
// Error(SpecInvalid).
SimPopulation build_population(std::string_view spec_text);
SimPopulation load_population(const std::string& path);

// ProviderPort over a set of profiles. Also records fabrication ground
// truth per (model, case, seed) and supports scripted fault injection.
class SimulatedProvider final : public ProviderPort {
 public:
  struct Fault {
    TransportFailure kind = TransportFailure::Network;
    int remaining = -1;  // attempts to fail; -1 = forever
  };

  explicit SimulatedProvider(std::vector<SimModelProfile> profiles);

  ProviderReply query(const ModelDescriptor& model, const ClinicalCase& c, const QueryContext& ctx) override;

  // A Timeout fault blocks until the attempt is cancelled.
  void inject_fault(const std::string& model_id, Fault fault);
  void clear_faults();

  std::optional<std::string> fabricated(const std::string& model_id, const std::string& case_id,
                                        std::uint64_t seed) const;
  int calls(const std::string& model_id) const;

 private:
  std::map<std::string, SimModelProfile> profiles_;
  mutable std::mutex mutex_;
  std::map<std::string, Fault> faults_;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::optional<std::string>> fabrications_;
  std::map<std::string, int> calls_;
};

// Synthesizer with scripted per-reference behaviour and a call log.
// Unscripted references succeed with a deterministic narrative.
class ScriptedSynthesizer final : public SynthesisPort {
 public:
  enum class Behavior { Succeed, Empty, Timeout, Overflow, Refusal, Network };

  void script(const std::string& ref, Behavior b);
  ProviderReply synthesize(std::string_view synthesizer_ref, std::string_view prompt,
                           const QueryContext& ctx) override;
  std::vector<std::string> calls() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Behavior> script_;
  std::vector<std::string> calls_;
};

}  // namespace dxe
