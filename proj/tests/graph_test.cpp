#include <gtest/gtest.h>

#include <chrono>
#include <set>
#include <sstream>

#include "fixtures.hpp"

using namespace breachradar;
using fixtures::Index;
using fixtures::tx;

namespace {

std::int64_t utc(int y, unsigned m, unsigned d, int hh = 0, int mm = 0, int ss = 0) {
  using namespace std::chrono;
  const sys_days date = year{y} / month{m} / day{d};
  return date.time_since_epoch().count() * 86400LL + hh * 3600 + mm * 60 + ss;
}

// Independent week counter: whole days since the anchor Monday, divided by 7.
std::int64_t week_by_day_count(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  const auto days = (sys_days{year{y} / month{m} / day{d}} - sys_days{year{1970} / January / 5}).count();
  return days >= 0 ? days / 7 : -((-days + 6) / 7);
}

std::vector<TransactionRecord> read_all(const std::string& csv) {
  std::istringstream in(csv);
  CsvTransactionReader reader(in);
  return reader.read_all();
}

std::set<std::pair<std::string, std::string>> edge_keys(const BipartiteGraph& g) {
  std::set<std::pair<std::string, std::string>> out;
  for (auto [i, j] : g.edge_list()) out.emplace(g.card_id(i), g.location(j).key());
  return out;
}

// Records that rebuild g: one transaction per edge, flagged when the card is.
std::vector<TransactionRecord> records_of(const BipartiteGraph& g) {
  std::vector<TransactionRecord> out;
  for (auto [i, j] : g.edge_list())
    out.push_back(tx(g.card_id(i), g.location(j).terminal_id, week_start(g.location(j).week_index) + 3600, 10,
                     g.is_fraud(i)));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- ingestion

TEST(Ingest, MapsFieldsOfOneRow) {
  const auto recs = read_all("card_id,terminal_id,timestamp,amount,is_fraud\nc1,t9,2014-03-02T10:00:00Z,1250,1\n");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].card_id, "c1");
  EXPECT_EQ(recs[0].terminal_id, "t9");
  EXPECT_EQ(recs[0].timestamp, utc(2014, 3, 2, 10));
  EXPECT_EQ(recs[0].amount, 1250);
  EXPECT_TRUE(recs[0].is_fraud);
}

TEST(Ingest, HeaderOnlyYieldsNothing) {
  std::istringstream in("card_id,terminal_id,timestamp,amount,is_fraud\n");
  CsvTransactionReader reader(in);
  EXPECT_TRUE(reader.read_all().empty());
  EXPECT_TRUE(reader.errors().empty());
}

TEST(Ingest, NegativeAmountAbortsWithLineNumber) {
  std::istringstream in("card_id,terminal_id,timestamp,amount,is_fraud\nc1,t1,100,5,0\nc2,t1,100,-5,0\n");
  CsvTransactionReader reader(in);
  ASSERT_TRUE(reader.next().has_value());
  try {
    reader.next();
    FAIL() << "expected a row error";
  } catch (const RowDataError& e) {
    EXPECT_EQ(e.row_error().line, 3u);
  }
}

TEST(Ingest, SkipPolicyCountsBadRows) {
  std::istringstream in(
      "card_id,terminal_id,timestamp,amount,is_fraud\n"
      "c1,t1,100,5,0\n"
      "c2,t1,100\n"
      "c3,t1,notatime,5,0\n"
      "c4,t1,100,abc,0\n"
      "c5,t1,200,7,1\n");
  CsvTransactionReader reader(in, {}, ErrorPolicy::kSkip);
  const auto recs = reader.read_all();
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[1].card_id, "c5");
  ASSERT_EQ(reader.errors().size(), 3u);
  EXPECT_EQ(reader.errors()[0].line, 3u);
  EXPECT_EQ(reader.errors()[1].line, 4u);
  EXPECT_EQ(reader.errors()[2].line, 5u);
}

TEST(Ingest, CustomColumnsAndQuoting) {
  std::istringstream in("ts,amt,pan,\"merchant, id\",label\n1000,3,\"card \"\"A\"\"\",\"m,1\",false\n");
  CsvSchema s{"pan", "merchant, id", "ts", "amt", "label"};
  CsvTransactionReader reader(in, s);
  const auto recs = reader.read_all();
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].card_id, "card \"A\"");
  EXPECT_EQ(recs[0].terminal_id, "m,1");
  EXPECT_EQ(recs[0].timestamp, 1000);
  EXPECT_FALSE(recs[0].is_fraud);
}

TEST(Ingest, MissingColumnIsDataError) {
  std::istringstream in("card_id,terminal_id,timestamp,amount\n");
  EXPECT_THROW(CsvTransactionReader r(in), DataError);
}

TEST(Ingest, CsvRoundTrip) {
  std::vector<TransactionRecord> recs{tx("a,b", "t\"1", 5, 10, true), tx("c", "t2", utc(2020, 2, 29, 23, 59, 59))};
  std::ostringstream out;
  write_transactions_csv(out, recs);
  std::istringstream in(out.str());
  CsvTransactionReader reader(in);
  const auto back = reader.read_all();
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].card_id, "a,b");
  EXPECT_EQ(back[0].terminal_id, "t\"1");
  EXPECT_EQ(back[1].timestamp, recs[1].timestamp);
  EXPECT_TRUE(back[0].is_fraud);
}

TEST(Timestamps, Rfc3339Offsets) {
  EXPECT_EQ(parse_rfc3339("2014-03-02T10:00:00Z"), utc(2014, 3, 2, 10));
  EXPECT_EQ(parse_rfc3339("2014-03-02T12:30:00+02:30"), utc(2014, 3, 2, 10));
  EXPECT_EQ(parse_rfc3339("2014-03-02T05:00:00.75-05:00"), utc(2014, 3, 2, 10));
  EXPECT_FALSE(parse_rfc3339("2014-02-30T00:00:00Z").has_value());
  EXPECT_FALSE(parse_rfc3339("2014-03-02 10:00").has_value());
  EXPECT_EQ(format_rfc3339(utc(1999, 12, 31, 23, 59, 59)), "1999-12-31T23:59:59Z");
}

// ---------------------------------------------------------------- weeks

TEST(Bucketize, EpochAnchor) {
  EXPECT_EQ(bucketize(tx("c", "t", utc(1970, 1, 5))).week_index, 0);
  EXPECT_EQ(bucketize(tx("c", "t", utc(1970, 1, 11, 23, 59, 59))).week_index, 0);
  EXPECT_EQ(bucketize(tx("c", "t", utc(1970, 1, 12))).week_index, 1);
  EXPECT_EQ(bucketize(tx("c", "t", utc(1970, 1, 4, 23, 59, 59))).week_index, -1);
}

TEST(Bucketize, FourteenDaysApartIsTwoWeeks) {
  const auto a = bucketize(tx("c", "t", utc(2014, 3, 2, 10)));
  const auto b = bucketize(tx("c", "t", utc(2014, 3, 16, 10)));
  EXPECT_NE(a, b);
  EXPECT_EQ(b.week_index - a.week_index, 2);
}

TEST(Bucketize, MatchesDayCountOracle) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 2000; ++k) {
    const int y = 1970 + static_cast<int>(rng() % 80);
    const unsigned m = 1 + static_cast<unsigned>(rng() % 12);
    const unsigned d = 1 + static_cast<unsigned>(rng() % 28);
    const int hh = static_cast<int>(rng() % 24);
    EXPECT_EQ(week_index_of(utc(y, m, d, hh, 59, 59)), week_by_day_count(y, m, d)) << y << '-' << m << '-' << d;
  }
}

TEST(Bucketize, KeyRoundTrip) {
  const LocationBucket b{"term@x", 2296};
  EXPECT_EQ(b.key(), "term@x@2296");
  EXPECT_EQ(LocationBucket::parse(b.key()), b);
  EXPECT_THROW(LocationBucket::parse("nokey"), DataError);
}

// ---------------------------------------------------------------- build_graph

TEST(BuildGraph, DeduplicatesRepeatTransactions) {
  std::vector<TransactionRecord> recs{tx("c1", "b1", 10, 1, true), tx("c1", "b1", 20), tx("c1", "b1", 30)};
  const auto g = build_graph(recs, 1);
  EXPECT_EQ(g.num_cards(), 1u);
  EXPECT_EQ(g.num_locations(), 1u);
  EXPECT_EQ(g.num_edges(), 1u);
  EXPECT_TRUE(g.is_fraud(0));
}

TEST(BuildGraph, DropsBucketWithFourFraudCards) {
  std::vector<TransactionRecord> recs;
  for (int i = 0; i < 4; ++i) recs.push_back(tx("f" + std::to_string(i), "weak", 10, 1, true));
  for (int i = 0; i < 5; ++i) recs.push_back(tx("g" + std::to_string(i), "strong", 10, 1, true));
  const auto g = build_graph(recs, 5);
  ASSERT_EQ(g.num_locations(), 1u);
  EXPECT_EQ(g.location(0).terminal_id, "strong");
  EXPECT_EQ(g.num_cards(), 5u);
}

TEST(BuildGraph, TenCardsSixFraudOneBucket) {
  std::vector<TransactionRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(tx("c" + std::to_string(i), "t", 100, 1, i < 6));
  const auto g = build_graph(recs, 5);
  EXPECT_EQ(g.num_cards(), 10u);
  EXPECT_EQ(g.num_locations(), 1u);
  EXPECT_EQ(g.degree_of_location(0), 10u);
  EXPECT_EQ(g.fraud_neighbors(0), 6u);
  EXPECT_EQ(g.num_fraud_cards(), 6u);
}

TEST(BuildGraph, FraudFlagFromAnyTransactionAndFirstAppearanceOrder) {
  std::vector<TransactionRecord> recs{tx("z", "t2", 10), tx("a", "t1", 10, 1, true), tx("z", "t1", 10),
                                      tx("z", "t9", 10, 1, true)};
  const auto g = build_graph(recs, 1);
  ASSERT_EQ(g.num_cards(), 2u);
  EXPECT_EQ(g.card_id(0), "z");
  EXPECT_EQ(g.card_id(1), "a");
  EXPECT_TRUE(g.is_fraud(0));
  ASSERT_EQ(g.num_locations(), 3u);
  EXPECT_EQ(g.location(0).terminal_id, "t2");
}

TEST(BuildGraph, IsolatedCardsRemovedWithoutCascade) {
  // Bucket "keep" has 2 fraud-cards; "drop" has 1. Card x only used "drop".
  std::vector<TransactionRecord> recs{tx("f1", "keep", 10, 1, true), tx("f2", "keep", 10, 1, true),
                                      tx("x", "drop", 10, 1, true), tx("n", "keep", 10)};
  const auto g = build_graph(recs, 2);
  EXPECT_EQ(g.num_locations(), 1u);
  EXPECT_EQ(g.num_cards(), 3u);
  for (Index i = 0; i < g.num_cards(); ++i) EXPECT_NE(g.card_id(i), "x");
  // A card whose fraud transaction was at a dropped bucket keeps its flag.
  std::vector<TransactionRecord> recs2{tx("f1", "keep", 10, 1, true), tx("f2", "keep", 10, 1, true),
                                       tx("n", "keep", 10), tx("n", "drop", 10, 1, true)};
  const auto g2 = build_graph(recs2, 2);
  EXPECT_EQ(g2.fraud_neighbors(0), 3u);
}

TEST(BuildGraph, NoSurvivorsIsAnError) {
  std::vector<TransactionRecord> recs{tx("c", "t", 10, 1, true)};
  try {
    build_graph(recs, 5);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no candidate POCs"), std::string::npos);
  }
  EXPECT_THROW(build_graph(std::vector<TransactionRecord>{}, 1), DataError);
}

TEST(BuildGraph, InvalidRecordsRejected) {
  GraphBuilder b;
  EXPECT_THROW(b.add(tx("", "t", 1)), DataError);
  EXPECT_THROW(b.add(tx("c", "t", 1, -1)), DataError);
}

// ---------------------------------------------------------------- properties

class RandomCorpus : public ::testing::TestWithParam<int> {
 protected:
  std::vector<TransactionRecord> corpus() const {
    std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
    std::vector<TransactionRecord> recs;
    const std::size_t n = 300 + rng() % 700;
    for (std::size_t k = 0; k < n; ++k) {
      const auto c = rng() % 120;
      recs.push_back(tx("c" + std::to_string(c), "t" + std::to_string(rng() % 15),
                        utc(2015, 1, 1) + static_cast<std::int64_t>(rng() % (21 * 86400)), 100,
                        c % 4 == 0 && rng() % 3 == 0));
    }
    return recs;
  }
};

TEST_P(RandomCorpus, TransposeConsistencyAndSortedUniqueLists) {
  const auto g = build_graph(corpus(), 2);
  std::set<std::pair<Index, Index>> from_cards, from_locs;
  for (Index i = 0; i < g.num_cards(); ++i) {
    const auto l = g.locations_of(i);
    EXPECT_TRUE(std::is_sorted(l.begin(), l.end()));
    EXPECT_EQ(std::adjacent_find(l.begin(), l.end()), l.end());
    EXPECT_FALSE(l.empty());
    for (Index j : l) from_cards.emplace(i, j);
  }
  for (Index j = 0; j < g.num_locations(); ++j) {
    const auto n = g.cards_of(j);
    EXPECT_TRUE(std::is_sorted(n.begin(), n.end()));
    EXPECT_EQ(std::adjacent_find(n.begin(), n.end()), n.end());
    std::size_t fraud = 0;
    for (std::size_t k = 0; k < n.size(); ++k) {
      from_locs.emplace(n[k], j);
      fraud += g.is_fraud(n[k]);
      EXPECT_EQ(g.edge_location(g.edges_of_location(j)[k]), j);
    }
    EXPECT_GE(fraud, 2u);
    EXPECT_EQ(fraud, g.fraud_neighbors(j));
  }
  EXPECT_EQ(from_cards, from_locs);
  EXPECT_EQ(from_cards.size(), g.num_edges());
}

TEST_P(RandomCorpus, FilterIsAFixedPoint) {
  const auto g = build_graph(corpus(), 2);
  const auto again = build_graph(records_of(g), 2);
  EXPECT_EQ(edge_keys(again), edge_keys(g));
  EXPECT_EQ(again.num_fraud_cards(), g.num_fraud_cards());
}

TEST_P(RandomCorpus, DeterministicAndSnapshotRoundTrip) {
  const auto recs = corpus();
  const auto g = build_graph(recs, 2);
  EXPECT_TRUE(build_graph(recs, 2) == g);
  std::stringstream buf;
  write_snapshot(buf, g);
  const auto back = read_snapshot(buf);
  EXPECT_TRUE(back == g);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomCorpus, ::testing::Range(1, 21));

TEST(Snapshot, RejectsCorruptInput) {
  const auto g = fixtures::three_card();
  std::stringstream buf;
  write_snapshot(buf, g);
  std::string bytes = buf.str();
  EXPECT_EQ(bytes.compare(0, 7, "BRGRAPH"), 0);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  EXPECT_THROW(read_snapshot(in1), DataError);

  std::istringstream in2(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_snapshot(in2), DataError);
}

TEST(Snapshot, StatsJson) {
  const auto s = graph_stats(fixtures::three_card());
  EXPECT_EQ(s["cards"], 3);
  EXPECT_EQ(s["locations"], 2);
  EXPECT_EQ(s["edges"], 4);
  EXPECT_EQ(s["fraud_cards"], 2);
}
