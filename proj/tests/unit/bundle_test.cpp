#include <gtest/gtest.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <regex>

#include "dtnsim/bundle.hpp"
#include "dtnsim/error.hpp"
#include "test_support.hpp"

namespace dtnsim {
namespace {

using testing::test_key;

DTNBundle make(std::mt19937_64& rng, Priority p, UtcTime at, std::string_view text = "hello") {
  return create_bundle(text, Endpoint("toronto"), Endpoint(std::string(kIssNode)),
                       BundleOptions{p, true, 3600}, test_key(), at, rng);
}

const UtcTime kT0 = make_utc(2025, 1, 1);

TEST(CreateBundle, FillsIdentityHashAndSecurity) {
  std::mt19937_64 rng(1);
  const DTNBundle b = make(rng, Priority::Normal, kT0);
  EXPECT_TRUE(std::regex_match(b.bundle_id, std::regex(R"(toronto-\d+-[0-9a-f]{8})")));
  EXPECT_EQ(b.payload_hash, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  EXPECT_EQ(b.hop_list, std::vector<std::string>{"toronto"});
  EXPECT_EQ(b.status, BundleStatus::Created);
  EXPECT_FALSE(b.security.bab.has_value());
  EXPECT_TRUE(pib_verify(b.security.pib, sha256_hex(b.encrypted_payload), test_key()));
  EXPECT_EQ(testing::as_string(open_payload(b, test_key())), "hello");
}

TEST(CreateBundle, IdenticalInputsGiveDistinctIds) {
  std::mt19937_64 rng(1);
  EXPECT_NE(make(rng, Priority::Normal, kT0).bundle_id, make(rng, Priority::Normal, kT0).bundle_id);
}

TEST(CreateBundle, RejectsBadInput) {
  std::mt19937_64 rng(1);
  const Endpoint src("toronto");
  const Endpoint iss{std::string(kIssNode)};
  EXPECT_THROW(create_bundle(std::string_view{}, src, iss, {}, test_key(), kT0, rng), DomainError);
  EXPECT_THROW(create_bundle("x", src, iss, BundleOptions{Priority::Normal, true, 0.0}, test_key(),
                             kT0, rng),
               DomainError);
  EXPECT_THROW(create_bundle("x", Endpoint("*"), iss, {}, test_key(), kT0, rng), DomainError);
  EXPECT_THROW(create_bundle("x", src, src, {}, test_key(), kT0, rng), DomainError);
  EXPECT_THROW(Endpoint(""), DomainError);
}

TEST(Lifecycle, OnlyGraphEdgesAreAllowed) {
  using S = BundleStatus;
  const S all[] = {S::Created, S::Queued, S::InTransit, S::Delivered, S::Failed, S::Expired};
  const std::set<std::pair<S, S>> edges = {
      {S::Created, S::Queued},        {S::Queued, S::InTransit},    {S::InTransit, S::Queued},
      {S::InTransit, S::Delivered},   {S::InTransit, S::Failed},    {S::Created, S::Expired},
      {S::Queued, S::Expired},        {S::InTransit, S::Expired}};
  for (S from : all) {
    for (S to : all) {
      EXPECT_EQ(transition_allowed(from, to), edges.contains({from, to}))
          << to_string(from) << "->" << to_string(to);
    }
  }
  DTNBundle b;
  b.bundle_id = "x";
  EXPECT_THROW(set_status(b, S::Delivered), ProtocolError);
  set_status(b, S::Queued);
  set_status(b, S::InTransit);
  set_status(b, S::Delivered);
  EXPECT_THROW(set_status(b, S::Expired), ProtocolError);
}

TEST(HopList, RejectsRepeatedNodes) {
  DTNBundle b;
  b.hop_list = {"toronto"};
  append_hop(b, "london");
  EXPECT_THROW(append_hop(b, "toronto"), ProtocolError);
  EXPECT_EQ(b.hop_list.size(), 2u);
}

TEST(Queue, ExpeditedDrainsFirst) {
  std::mt19937_64 rng(2);
  BundleQueue q;
  q.enqueue(make(rng, Priority::Normal, kT0));
  const DTNBundle exp = make(rng, Priority::Expedited, add_seconds(kT0, 5));
  q.enqueue(exp);
  EXPECT_EQ(q.next_for_transmission()->bundle_id, exp.bundle_id);
}

TEST(Queue, FifoWithinPriorityAndStatusQueued) {
  std::mt19937_64 rng(3);
  BundleQueue q;
  const DTNBundle a = make(rng, Priority::Normal, kT0);
  const DTNBundle b = make(rng, Priority::Normal, add_seconds(kT0, 1));
  q.enqueue(b);
  q.enqueue(a);
  auto first = q.next_for_transmission();
  EXPECT_EQ(first->bundle_id, a.bundle_id);
  EXPECT_EQ(first->status, BundleStatus::Queued);
  EXPECT_EQ(q.next_for_transmission()->bundle_id, b.bundle_id);
  EXPECT_FALSE(q.next_for_transmission().has_value());
}

TEST(Queue, TieBreaksByBundleId) {
  DTNBundle a;
  a.bundle_id = "b-2";
  a.created_at = kT0;
  DTNBundle b = a;
  b.bundle_id = "b-1";
  BundleQueue q;
  q.enqueue(a);
  q.enqueue(b);
  EXPECT_EQ(q.next_for_transmission()->bundle_id, "b-1");
}

TEST(Queue, RejectsDuplicatesAndTerminalBundles) {
  std::mt19937_64 rng(4);
  BundleQueue q;
  const DTNBundle a = make(rng, Priority::Normal, kT0);
  q.enqueue(a);
  EXPECT_THROW(q.enqueue(a), ProtocolError);
  DTNBundle done = make(rng, Priority::Normal, kT0);
  done.status = BundleStatus::Delivered;
  EXPECT_THROW(q.enqueue(done), ProtocolError);
}

TEST(Queue, DrainOrderIsATotalOrder) {
  std::mt19937_64 rng(99);
  std::vector<DTNBundle> pool;
  for (int i = 0; i < 40; ++i) {
    DTNBundle b;
    b.bundle_id = "n" + std::to_string(rng() % 1000) + "-" + std::to_string(i);
    b.priority = static_cast<Priority>(rng() % 3);
    b.created_at = add_seconds(kT0, static_cast<double>(rng() % 5));  // force ties
    pool.push_back(b);
  }
  std::vector<std::string> reference;
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(pool.begin(), pool.end(), rng);
    BundleQueue q;
    for (const auto& b : pool) q.enqueue(b);
    std::vector<std::string> drained;
    while (auto b = q.next_for_transmission()) drained.push_back(b->bundle_id);
    if (reference.empty()) reference = drained;
    ASSERT_EQ(drained, reference);
  }
  std::vector<DTNBundle> sorted = pool;
  std::sort(sorted.begin(), sorted.end(), drains_before);
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i].bundle_id, reference[i]);
}

TEST(Expiry, LapsedBundlesLeaveTheQueue) {
  std::mt19937_64 rng(5);
  BundleQueue q;
  q.enqueue(make(rng, Priority::Normal, kT0));  // ttl 3600
  EXPECT_TRUE(q.expire_ttl(add_seconds(kT0, 3599.9)).empty());
  auto expired = q.expire_ttl(add_seconds(kT0, 3600));
  ASSERT_EQ(expired.size(), 1u);
  EXPECT_EQ(expired[0].status, BundleStatus::Expired);
  EXPECT_TRUE(q.empty());
}

TEST(Expiry, TerminalBundlesAreImmune) {
  std::mt19937_64 rng(6);
  std::vector<DTNBundle> v{make(rng, Priority::Normal, kT0), make(rng, Priority::Normal, kT0),
                           make(rng, Priority::Normal, add_seconds(kT0, 100))};
  v[1].status = BundleStatus::Delivered;
  const auto ids = expire_ttl(add_seconds(kT0, 3650), v);
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0], v[0].bundle_id);
  EXPECT_EQ(v[1].status, BundleStatus::Delivered);
  EXPECT_EQ(v[2].status, BundleStatus::Created);
}

TEST(Document, RoundTripsGeneratedBundles) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    DTNBundle b = make(rng, static_cast<Priority>(i % 3), add_seconds(kT0, i * 0.001),
                       std::string(1 + rng() % 300, 'q'));
    b.custody = i % 2 == 0;
    b.ttl_s = 10.5 + i;
    if (i % 3 == 0) b.security.bab = bab_create(b.bab_subject(), "toronto", "ISS", test_key());
    if (i % 4 == 0) {
      b.fragment = FragmentInfo{"parent", i % 5, 5, sha256_hex("x"), sha256_hex("y")};
    }
    EXPECT_EQ(deserialize_bundle(serialize(b)), b);
  }
}

TEST(Document, HasExactlyTheBundleFields) {
  std::mt19937_64 rng(9);
  const auto doc = nlohmann::json::parse(serialize(make(rng, Priority::Bulk, kT0)));
  std::vector<std::string> keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"bundle_id", "created_at", "custody", "destination",
                                            "encrypted_payload", "hop_list", "payload_hash",
                                            "priority", "security", "source", "status", "ttl_s"}));
  EXPECT_EQ(doc["priority"], "BULK");
  EXPECT_EQ(doc["created_at"], "2025-01-01T00:00:00.000000Z");
  EXPECT_THROW(deserialize_bundle("{}"), ParseError);
  EXPECT_THROW(deserialize_bundle("not json"), ParseError);
}

}  // namespace
}  // namespace dtnsim
