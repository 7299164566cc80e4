#pragma once

#include <nlohmann/json.hpp>

#include "dxe/biaslens.hpp"
#include "dxe/casemodel.hpp"
#include "dxe/consensus.hpp"
#include "dxe/gateway.hpp"
#include "dxe/registry.hpp"
#include "dxe/synthesis.hpp"

// JSON codecs for machine documents (run records, reports, HTTP bodies).
// Enums travel as their to_string spelling; from_json throws
// Error(InvalidDocument) on unknown spellings or missing fields.
namespace dxe {

using nlohmann::json;

void to_json(json& j, const ModelDescriptor& d);
void from_json(const json& j, ModelDescriptor& d);
void to_json(json& j, const RegistrySnapshot& s);
void from_json(const json& j, RegistrySnapshot& s);

void to_json(json& j, const ClinicalCase& c);
void from_json(const json& j, ClinicalCase& c);

void to_json(json& j, const DiagnosisCandidate& c);
void from_json(const json& j, DiagnosisCandidate& c);
void to_json(json& j, const ModelResponse& r);
void from_json(const json& j, ModelResponse& r);

void to_json(json& j, const QueryPlan& p);
void from_json(const json& j, QueryPlan& p);

void to_json(json& j, const DiagnosisStats& s);
void from_json(const json& j, DiagnosisStats& s);
void to_json(json& j, const StratifiedDifferential& d);
void from_json(const json& j, StratifiedDifferential& d);
void to_json(json& j, const ModelParticipation& p);

void to_json(json& j, const MarkerCounts& m);
void from_json(const json& j, MarkerCounts& m);
void to_json(json& j, const TreatmentSplit& t);
void from_json(const json& j, TreatmentSplit& t);
void to_json(json& j, const BiasFindings& f);
void from_json(const json& j, BiasFindings& f);

void to_json(json& j, const ChainEntry& e);
void from_json(const json& j, ChainEntry& e);
void to_json(json& j, const SynthesisAttempt& a);
void from_json(const json& j, SynthesisAttempt& a);
void to_json(json& j, const ProvenanceEntry& p);
void from_json(const json& j, ProvenanceEntry& p);
void to_json(json& j, const EnsembleReport& r);
void from_json(const json& j, EnsembleReport& r);

json chain_to_json(const SynthesizerChain& chain);
SynthesizerChain chain_from_json(const json& j);

// Parses `text` as JSON, mapping syntax errors to Error(InvalidDocument).
json parse_json_document(std::string_view text, std::string_view source_name);

}  // namespace dxe
