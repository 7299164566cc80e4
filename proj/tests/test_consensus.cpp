#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "dxe/consensus.hpp"
#include "dxe/error.hpp"
#include "oracle.hpp"
#include "test_support.hpp"

using namespace dxe;
using dxe::testing::candidate;
using dxe::testing::ok_response;

namespace {

// n responses whose top-1 picks follow `votes` (label -> count), each also
// listing `also` at rank 2 when non-empty.
std::vector<ModelResponse> votes_fixture(const std::vector<std::pair<std::string, int>>& votes,
                                         const std::string& also = {}) {
  std::vector<ModelResponse> out;
  int m = 0;
  for (const auto& [label, count] : votes) {
    for (int i = 0; i < count; ++i) {
      std::vector<DiagnosisCandidate> c = {candidate(label, "", 0.7, 1)};
      if (!also.empty() && also != label) c.push_back(candidate(also, "", 0.2, 2));
      char id[16];
      std::snprintf(id, sizeof(id), "m%03d", m++);
      out.push_back(ok_response(id, "c", c));
    }
  }
  return out;
}

void check_matches_oracle(const std::vector<ModelResponse>& responses, std::string_view synonyms_text) {
  const auto synonyms = SynonymTable::parse(synonyms_text);
  const auto expected = oracle::stratify(responses, oracle::parse_synonyms(synonyms_text));
  if (expected.no_responders) {
    CHECK_THROWS_AS(stratify(responses, synonyms), Error);
    return;
  }
  const auto got = stratify(responses, synonyms);
  CHECK(got.responding_count == expected.responders);
  REQUIRE(got.entries.size() == expected.entries.size());
  CHECK(got.breadth == static_cast<int>(expected.entries.size()));
  for (const auto& [key, e] : expected.entries) {
    const auto* s = got.find(key);
    REQUIRE(s != nullptr);
    CHECK(s->top1_count == e.top1);
    CHECK(s->any_mention_count == e.any);
    CHECK(s->share == e.share);
    CHECK(s->supporting_models == e.supporters);
    CHECK((s->tier ? std::string(to_string(*s->tier)) : std::string()) == e.tier);
  }
}

}  // namespace

TEST_CASE("canonical keys", "[consensus]") {
  const auto syn = SynonymTable::parse("FMF => familial mediterranean fever\n");
  CHECK(canonical_key(candidate("Familial Mediterranean Fever", "E85.0", 0.5, 1), syn) == "e85");
  CHECK(canonical_key(candidate("FMF", "", 0.5, 1), syn) == "familial mediterranean fever");
  CHECK(canonical_key(candidate("Viral Myocarditis!", "", 0.5, 1), syn) == "viral myocarditis");
  CHECK(normalize_label("  Crohn's   Disease ") == "crohns disease");
  CHECK(normalize_label("Still-disease (adult)") == "still disease adult");
  CHECK(SynonymTable::parse(syn.to_text()).entries() == syn.entries());
}

TEST_CASE("stratify on the four-hypothesis scenario", "[consensus]") {
  const auto responses = votes_fixture({{"FMF", 13}, {"Viral myocarditis", 4}, {"Pericarditis", 2}, {"Anxiety", 1}});
  const auto diff = stratify(responses, SynonymTable::parse("FMF => familial mediterranean fever\n"));
  CHECK(diff.responding_count == 20);
  const auto* fmf = diff.find("familial mediterranean fever");
  REQUIRE(fmf);
  CHECK(fmf->share == 0.65);
  CHECK(fmf->tier == Tier::Primary);
  CHECK(diff.find("viral myocarditis")->share == 0.20);
  CHECK(diff.find("viral myocarditis")->tier == Tier::Alternative);
  CHECK(diff.find("pericarditis")->share == 0.10);
  CHECK(diff.find("pericarditis")->tier == Tier::Alternative);
  CHECK(diff.find("anxiety")->share == 0.05);
  CHECK(diff.find("anxiety")->tier == Tier::Minority);
  CHECK(diff.entries.front().key == "familial mediterranean fever");
  CHECK(diff.leading_key() == "familial mediterranean fever");
  CHECK(display_percent(consensus_rate(diff)) == 65);
}

TEST_CASE("tier boundaries", "[consensus]") {
  CHECK(tier_for(9, 30) == Tier::Primary);
  CHECK(tier_for(8, 30) == Tier::Alternative);
  CHECK(tier_for(3, 30) == Tier::Alternative);
  CHECK(tier_for(2, 30) == Tier::Minority);
  CHECK(tier_for(2, 21) == Tier::Minority);
  CHECK(tier_for(1, 1) == Tier::Primary);
  CHECK_FALSE(tier_for(0, 30).has_value());

  const auto diff = stratify(votes_fixture({{"X", 9}, {"Y", 3}, {"Z", 18}}), SynonymTable{});
  CHECK(diff.find("x")->tier == Tier::Primary);
  CHECK(diff.find("y")->tier == Tier::Alternative);
  const auto d21 = stratify(votes_fixture({{"X", 2}, {"Y", 19}}), SynonymTable{});
  CHECK(d21.find("x")->tier == Tier::Minority);
}

TEST_CASE("tier intervals partition the unit interval", "[consensus][property]") {
  for (int n = 1; n <= 60; ++n) {
    for (int v = 1; v <= n; ++v) {
      const auto t = tier_for(v, n);
      REQUIRE(t.has_value());
      const int pct_times_n = 100 * v;
      const auto expected = pct_times_n >= 30 * n ? Tier::Primary : pct_times_n >= 10 * n ? Tier::Alternative : Tier::Minority;
      CHECK(*t == expected);
    }
  }
}

TEST_CASE("no responders", "[consensus]") {
  std::vector<ModelResponse> none = {dxe::testing::failed_response("a", "c", ResponseStatus::Timeout)};
  try {
    stratify(none, SynonymTable{});
    FAIL("stratified without responders");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoResponders);
  }
  CHECK_THROWS_AS(stratify(std::vector<ModelResponse>{}, SynonymTable{}), Error);
}

TEST_CASE("consensus rate display", "[consensus]") {
  const auto d63 = stratify(votes_fixture({{"FMF", 19}, {"Other", 11}}), SynonymTable{});
  CHECK(consensus_rate(d63) == 19.0 / 30.0);
  CHECK(display_percent(consensus_rate(d63)) == 63);
  const auto d53 = stratify(votes_fixture({{"IgA", 16}, {"Other", 14}}), SynonymTable{});
  CHECK(display_percent(consensus_rate(d53)) == 53);
  const auto unanimous = stratify(votes_fixture({{"X", 5}}), SynonymTable{});
  CHECK(consensus_rate(unanimous) == 1.0);
  CHECK(display_percent(0.625) == 63);
  CHECK(display_percent_1dp(5.0 / 6.0) == 83.3);
}

TEST_CASE("breadth counts every key at any rank", "[consensus]") {
  std::vector<ModelResponse> r = {ok_response("a", "c", {candidate("A", "", .5, 1), candidate("B", "", .3, 2)}),
                                  ok_response("b", "c", {candidate("A", "", .5, 1), candidate("C", "", .3, 2)})};
  const auto diff = stratify(r, SynonymTable{});
  CHECK(diagnostic_breadth(diff) == 3);
  CHECK(diff.find("b")->tier == std::nullopt);
  CHECK(diff.find("b")->any_mention_count == 1);
  CHECK(diff.non_primary_count() == 2);
  CHECK(diff.alternative_tier_count() == 0);

  const auto one = stratify(votes_fixture({{"X", 4}}), SynonymTable{});
  const std::vector<StratifiedDifferential> runs = {one};
  const auto s = breadth_stats(runs);
  CHECK(s.mean == 1.0);
  CHECK(s.min == 1);
  CHECK(s.max == 1);
  CHECK_THROWS_AS(breadth_stats(std::vector<StratifiedDifferential>{}), Error);
}

TEST_CASE("a key listed twice by one model counts once", "[consensus]") {
  std::vector<ModelResponse> r = {ok_response(
      "a", "c", {candidate("FMF", "", .5, 1), candidate("Familial Mediterranean fever", "", .4, 2)})};
  const auto diff = stratify(r, SynonymTable::parse("fmf => familial mediterranean fever"));
  REQUIRE(diff.entries.size() == 1);
  CHECK(diff.entries[0].any_mention_count == 1);
  CHECK(diff.entries[0].top1_count == 1);
  CHECK(diff.entries[0].mean_confidence == 0.5);
  CHECK(diff.entries[0].member_labels.size() == 2);
}

TEST_CASE("stratify equals the oracle on random sets", "[consensus][oracle]") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 40);
    check_matches_oracle(dxe::testing::random_response_set(rng, n, 10), dxe::testing::kRandomSynonyms);
  }
}

TEST_CASE("stratify is permutation invariant and ignores non-Ok responses", "[consensus][property]") {
  std::mt19937_64 rng(77);
  const auto syn = SynonymTable::parse(dxe::testing::kRandomSynonyms);
  for (int trial = 0; trial < 50; ++trial) {
    auto responses = dxe::testing::random_response_set(rng, 5 + static_cast<int>(rng() % 30), 6);
    std::optional<StratifiedDifferential> base;
    try {
      base = stratify(responses, syn);
    } catch (const Error&) {
      continue;
    }
    auto shuffled = responses;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(stratify(shuffled, syn) == *base);

    auto with_noise = responses;
    with_noise.push_back(dxe::testing::failed_response("zz-timeout", "case", ResponseStatus::Timeout));
    auto malformed = dxe::testing::failed_response("zz-bad", "case", ResponseStatus::MalformedOutput);
    malformed.raw_text = "FMF, surely";
    with_noise.push_back(malformed);
    CHECK(stratify(with_noise, syn) == *base);
  }
}

TEST_CASE("participation categories", "[consensus]") {
  CHECK(participation_category(5, 6) == ParticipationCategory::High);
  CHECK(participation_category(2, 6) == ParticipationCategory::Moderate);
  CHECK(participation_category(0, 6) == ParticipationCategory::Low);
  CHECK(participation_category(3, 5) == ParticipationCategory::High);
  CHECK(participation_category(3, 10) == ParticipationCategory::Moderate);
  CHECK(participation_category(1, 6) == ParticipationCategory::Low);
}

TEST_CASE("model participation over runs", "[consensus]") {
  // Model "a" is top-1 on the Primary key in 5 of 6 runs; "b" in 2 of 6;
  // "c" never; "d" answers Ok only once and times out otherwise.
  std::vector<RunOutcome> runs;
  for (int i = 0; i < 6; ++i) {
    std::vector<ModelResponse> r;
    for (int k = 0; k < 4; ++k) r.push_back(ok_response("p" + std::to_string(k), "c", {candidate("Lead", "", .8, 1)}));
    r.push_back(ok_response("a", "c", {candidate(i < 5 ? "Lead" : "Other A", "", .8, 1)}));
    r.push_back(ok_response("b", "c", {candidate(i < 2 ? "Lead" : "Other B", "", .8, 1)}));
    r.push_back(ok_response("c", "c", {candidate("Other C", "", .8, 1)}));
    r.push_back(i == 0 ? ok_response("d", "c", {candidate("Lead", "", .8, 1)})
                       : dxe::testing::failed_response("d", "c", ResponseStatus::Timeout));
    runs.push_back({stratify(r, SynonymTable{}), r});
  }
  const auto parts = model_participation(runs, SynonymTable{});
  std::map<std::string, ModelParticipation> by;
  for (const auto& p : parts) by[p.model_id] = p;
  CHECK(by["a"].participation_rate == 5.0 / 6.0);
  CHECK(display_percent_1dp(by["a"].participation_rate) == 83.3);
  CHECK(by["a"].category == ParticipationCategory::High);
  CHECK(by["b"].participation_rate == 2.0 / 6.0);
  CHECK(by["b"].category == ParticipationCategory::Moderate);
  CHECK(by["c"].participation_rate == 0.0);
  CHECK(by["c"].category == ParticipationCategory::Low);
  CHECK(by["d"].cases_counted == 1);
  CHECK(by["d"].participation_rate == 1.0);
  CHECK(std::is_sorted(parts.begin(), parts.end(), [](const auto& x, const auto& y) {
    return x.participation_rate > y.participation_rate ||
           (x.participation_rate == y.participation_rate && x.model_id < y.model_id);
  }));
}

TEST_CASE("cohort comparison", "[consensus]") {
  RegistrySnapshot snap({dxe::testing::descriptor("f1", Region::US, CostTier::Free),
                         dxe::testing::descriptor("f2", Region::Europe, CostTier::Free),
                         dxe::testing::descriptor("p1", Region::US, CostTier::Paid)});
  std::vector<ModelParticipation> single = {{"f1", 2, 1, 0.5, ParticipationCategory::Moderate}};
  CHECK(cohort_comparison(single, snap).by_cost_tier == std::map<CostTier, double>{{CostTier::Free, 0.5}});
  std::vector<ModelParticipation> two = {{"f1", 5, 2, 0.4, ParticipationCategory::Moderate},
                                         {"f2", 5, 3, 0.6, ParticipationCategory::High}};
  const auto c = cohort_comparison(two, snap);
  CHECK(c.by_cost_tier.at(CostTier::Free) == Catch::Approx(0.5).margin(1e-12));
  CHECK(c.by_region.at(Region::US) == 0.4);
  std::vector<ModelParticipation> unknown = {{"ghost", 1, 1, 1.0, ParticipationCategory::High}};
  CHECK_THROWS_AS(cohort_comparison(unknown, snap), Error);
}
