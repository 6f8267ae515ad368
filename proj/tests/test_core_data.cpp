#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "charm/core_data.hpp"
#include "test_util.hpp"

using namespace charm;
using charm::testing::TempDir;

TEST(Vectorize, MinimumResponsesGiveZeroVector) {
  const auto hc = vectorize_questionnaire(charm::testing::uniform_answers(1, 0, 0));
  for (double v : hc.values()) EXPECT_EQ(v, 0.0);
}

TEST(Vectorize, MaximumResponsesGiveOnesVector) {
  for (int years : {10, 11, 40}) {
    const auto hc = vectorize_questionnaire(charm::testing::uniform_answers(5, 1, years));
    for (double v : hc.values()) EXPECT_EQ(v, 1.0);
  }
}

TEST(Vectorize, HandEvaluatedEntries) {
  auto q = charm::testing::uniform_answers(3, 0, 4);
  const auto hc = vectorize_questionnaire(q);
  EXPECT_DOUBLE_EQ(hc[0], 0.5);
  EXPECT_DOUBLE_EQ(hc[9], 0.4);
}

TEST(Vectorize, DomainSlicesCoverAllItemsInOrder) {
  std::size_t next = 0;
  for (Domain d : kDomains) {
    const auto s = domain_slice(d);
    EXPECT_EQ(s.begin, next);
    next = s.end;
  }
  EXPECT_EQ(next, kHcDim);
  EXPECT_EQ(domain_slice(Domain::trust).size(), 3u);
  EXPECT_EQ(domain_slice(Domain::personality).size(), 10u);
}

TEST(Vectorize, MonotonePerItemAndBounded) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    auto q = charm::testing::random_answers(rng);
    const auto base = vectorize_questionnaire(q);
    for (double v : base.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const std::size_t i = rng() % kHcDim;
    auto up = q;
    switch (item_kind(i)) {
      case ItemKind::likert: up.answers[i] = std::min(5, up.answers[i] + 1); break;
      case ItemKind::role_flag: up.answers[i] = 1; break;
      case ItemKind::years_taught: up.answers[i] += 1; break;
    }
    EXPECT_GE(vectorize_questionnaire(up)[i], base[i]);
  }
}

TEST(Questionnaire, RejectsWrongCountNamingIt) {
  std::vector<double> raw(27, 3.0);
  try {
    make_questionnaire(raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::validation);
    EXPECT_NE(std::string(e.what()).find("27"), std::string::npos);
  }
}

TEST(Questionnaire, RejectsOutOfBoundsNamingItem) {
  auto q = charm::testing::uniform_answers(3, 0, 2);
  q.answers[5] = 6;
  try {
    vectorize_questionnaire(q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::validation);
    EXPECT_NE(std::string(e.what()).find("item 5"), std::string::npos);
  }
  q.answers[5] = 3;
  q.answers[8] = 2;
  EXPECT_THROW(vectorize_questionnaire(q), Error);
  std::vector<double> raw(28, 3.0);
  raw[8] = 0.0;
  raw[2] = 2.5;
  EXPECT_THROW(make_questionnaire(raw), Error);
}

TEST(WindowReward, Examples) {
  std::vector<double> w(30, 0.0);
  EXPECT_EQ(window_reward(w), 0.0);
  std::fill(w.begin(), w.end(), 0.1);
  EXPECT_NEAR(window_reward(w), 3.0, 1e-12);
  std::fill(w.begin(), w.end(), 0.0);
  w[0] = 1.0;
  w[1] = -1.0;
  EXPECT_EQ(window_reward(w), 0.0);
}

TEST(WindowReward, RejectsWrongLength) {
  std::vector<double> w(29, 0.0);
  EXPECT_THROW(window_reward(w), Error);
  w.push_back(std::nan(""));
  EXPECT_THROW(window_reward(w), Error);
}

TEST(WindowReward, PermutationInvariantAndAdditive) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> steps(60);
    for (double& s : steps) s = n(rng);
    const std::span<const double> all(steps);
    const double a = window_reward(all.subspan(0, 30));
    const double b = window_reward(all.subspan(30, 30));
    EXPECT_NEAR(a + b, std::accumulate(steps.begin(), steps.end(), 0.0), 1e-10);
    std::vector<double> first(steps.begin(), steps.begin() + 30);
    std::shuffle(first.begin(), first.end(), rng);
    EXPECT_NEAR(window_reward(first), a, 1e-10);
  }
}

namespace {

Dataset small_dataset() {
  auto p1 = make_profile("P1", charm::testing::uniform_answers(2, 1, 3));
  auto p2 = make_profile("P2", charm::testing::uniform_answers(4, 0, 12));
  std::vector<FeedbackEvent> events{
      charm::testing::event("P1", 0, 3.25, 2, 1.125),
      charm::testing::event("P1", 1, -0.1, std::nullopt, std::nullopt),
      charm::testing::event("P2", 0, 7.0, -1, 0.0, Task::coffee_prep),
  };
  return Dataset({p1, p2}, events);
}

}  // namespace

TEST(Dataset, RejectsUnknownParticipant) {
  auto p1 = make_profile("P1", charm::testing::uniform_answers(2, 1, 3));
  try {
    Dataset({p1}, {charm::testing::event("P9", 0, 1.0, 1, 1.0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::integrity);
  }
}

TEST(Dataset, RejectsDuplicates) {
  auto p1 = make_profile("P1", charm::testing::uniform_answers(2, 1, 3));
  EXPECT_THROW(Dataset({p1, p1}, {}), Error);
  const auto e = charm::testing::event("P1", 0, 1.0, 1, 1.0);
  try {
    Dataset({p1}, {e, e});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::duplicate_key);
  }
}

TEST(Dataset, RejectsInvalidEvents) {
  auto p1 = make_profile("P1", charm::testing::uniform_answers(2, 1, 3));
  EXPECT_THROW(Dataset({p1}, {charm::testing::event("P1", 0, 1.0, 3, 1.0)}), Error);
  EXPECT_THROW(Dataset({p1}, {charm::testing::event("P1", 0, 1.0, 1, 5.5)}), Error);
  EXPECT_THROW(Dataset({p1}, {charm::testing::event("P1", 0, 1.0, 1, std::nullopt)}), Error);
}

TEST(Dataset, RewardRangesPerTask) {
  const auto ds = small_dataset();
  ASSERT_TRUE(ds.reward_range(Task::nut_assembly));
  EXPECT_EQ(ds.reward_range(Task::nut_assembly)->min, -0.1);
  EXPECT_EQ(ds.reward_range(Task::nut_assembly)->max, 3.25);
  EXPECT_EQ(ds.reward_range(Task::coffee_prep)->min, 7.0);
}

TEST(Persistence, EmptyEventsFileLoads) {
  TempDir dir("core_empty_events");
  const auto p = make_profile("P1", charm::testing::uniform_answers(2, 1, 3));
  charm::testing::spit(dir / "profiles.jsonl", to_json(p).dump() + "\n");
  charm::testing::spit(dir / "events.jsonl", "");
  const auto ds = load_dataset(dir / "profiles.jsonl", dir / "events.jsonl");
  EXPECT_EQ(ds.profiles().size(), 1u);
  EXPECT_EQ(ds.events().size(), 0u);
}

TEST(Persistence, EmptyDatasetWritesEmptyFiles) {
  TempDir dir("core_empty_ds");
  save_dataset(Dataset{}, dir.path());
  EXPECT_EQ(charm::testing::slurp(dir / "profiles.jsonl"), "");
  EXPECT_EQ(charm::testing::slurp(dir / "events.jsonl"), "");
  EXPECT_EQ(load_dataset(dir.path()), Dataset{});
}

TEST(Persistence, RoundTripIsBitIdentical) {
  TempDir dir("core_roundtrip");
  const auto ds = small_dataset();
  save_dataset(ds, dir.path());
  const auto once = charm::testing::slurp(dir / "events.jsonl");
  const auto reloaded = load_dataset(dir.path());
  EXPECT_EQ(reloaded, ds);
  TempDir again("core_roundtrip2");
  save_dataset(reloaded, again.path());
  EXPECT_EQ(charm::testing::slurp(again / "events.jsonl"), once);
  EXPECT_EQ(charm::testing::slurp(again / "profiles.jsonl"), charm::testing::slurp(dir / "profiles.jsonl"));
}

TEST(Persistence, MissingEncodedAsNull) {
  TempDir dir("core_missing");
  save_dataset(small_dataset(), dir.path());
  const auto text = charm::testing::slurp(dir / "events.jsonl");
  EXPECT_NE(text.find("\"value\":null,\"delay_s\":null"), std::string::npos);
  const auto ds = load_dataset(dir.path());
  EXPECT_FALSE(ds.events()[1].rated());
  EXPECT_EQ(ds.events()[1].reward_stat, -0.1);
}

TEST(Persistence, RandomDatasetsRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> reward(-5.0, 20.0), delay(0.0, 5.0);
  std::uniform_int_distribution<int> value(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ParticipantProfile> profiles;
    std::vector<FeedbackEvent> events;
    for (int p = 0; p < 4; ++p) {
      const std::string id = "P" + std::to_string(p);
      profiles.push_back(make_profile(id, charm::testing::random_answers(rng)));
      for (int w = 0; w < 20; ++w) {
        if (rng() % 7 == 0) {
          events.push_back(charm::testing::event(id, w, reward(rng), std::nullopt, std::nullopt));
        } else {
          events.push_back(charm::testing::event(id, w, reward(rng), value(rng), delay(rng)));
        }
      }
    }
    const Dataset ds(profiles, events);
    TempDir dir("core_random_rt");
    save_dataset(ds, dir.path());
    EXPECT_EQ(load_dataset(dir.path()), ds);
  }
}

TEST(Persistence, ParseErrorsCarryLocation) {
  TempDir dir("core_bad_line");
  const auto p = make_profile("P1", charm::testing::uniform_answers(2, 1, 3));
  charm::testing::spit(dir / "profiles.jsonl", to_json(p).dump() + "\n{not json\n");
  charm::testing::spit(dir / "events.jsonl", "");
  try {
    load_dataset(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse);
    EXPECT_NE(std::string(e.what()).find("profiles.jsonl:2"), std::string::npos);
  }
}

TEST(Persistence, InconsistentHcRejected) {
  TempDir dir("core_bad_hc");
  auto j = to_json(make_profile("P1", charm::testing::uniform_answers(2, 1, 3)));
  j["hc"][0] = 0.9;
  charm::testing::spit(dir / "profiles.jsonl", j.dump() + "\n");
  charm::testing::spit(dir / "events.jsonl", "");
  EXPECT_THROW(load_dataset(dir.path()), Error);
}

TEST(Persistence, MissingFileIsIoError) {
  try {
    load_dataset("/nonexistent/profiles.jsonl", "/nonexistent/events.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
  }
}
