#pragma once

// CSV transaction ingestion, binary graph snapshots and the JSON stats summary.

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "breachradar/graph.hpp"

namespace breachradar {

// Splits one CSV line per RFC 4180 (double-quoted fields, "" escapes).
// Embedded newlines inside quotes are not supported.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

struct CsvSchema {
  std::string card = "card_id";
  std::string terminal = "terminal_id";
  std::string timestamp = "timestamp";
  std::string amount = "amount";
  std::string fraud = "is_fraud";
};

enum class ErrorPolicy { kAbort, kSkip };

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

class RowDataError : public DataError {
 public:
  explicit RowDataError(RowError e)
      : DataError("line " + std::to_string(e.line) + ": " + e.message), error_(std::move(e)) {}
  const RowError& row_error() const { return error_; }

 private:
  RowError error_;
};

enum class TimestampEncoding { kUnknown, kEpochSeconds, kRfc3339 };

// Streams validated records from a delimited text source.
//
// The timestamp encoding is detected from the first data row and then held
// for the whole column. Under kSkip, malformed rows are counted and
// recorded in errors(); under kAbort the first one throws RowDataError.
class CsvTransactionReader {
 public:
  CsvTransactionReader(std::istream& in, CsvSchema schema = {},
                       ErrorPolicy policy = ErrorPolicy::kAbort)
      : in_(in), policy_(policy) {
    std::string header;
    if (!std::getline(in_, header)) throw DataError("missing header row");
    line_ = 1;
    strip_cr(header);
    if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
    const auto cols = split_csv_line(header);
    num_columns_ = cols.size();
    auto find = [&](const std::string& name) {
      for (std::size_t k = 0; k < cols.size(); ++k)
        if (cols[k] == name) return k;
      throw DataError("header is missing required column '" + name + "'");
    };
    col_card_ = find(schema.card);
    col_terminal_ = find(schema.terminal);
    col_timestamp_ = find(schema.timestamp);
    col_amount_ = find(schema.amount);
    col_fraud_ = find(schema.fraud);
  }

  std::optional<TransactionRecord> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      strip_cr(line);
      if (line.empty()) continue;
      try {
        return parse_row(line);
      } catch (const DataError& e) {
        RowError err{line_, e.what()};
        if (policy_ == ErrorPolicy::kAbort) throw RowDataError(std::move(err));
        errors_.push_back(std::move(err));
      }
    }
    return std::nullopt;
  }

  std::vector<TransactionRecord> read_all() {
    std::vector<TransactionRecord> out;
    while (auto r = next()) out.push_back(std::move(*r));
    return out;
  }

  const std::vector<RowError>& errors() const { return errors_; }
  std::size_t skipped() const { return errors_.size(); }
  TimestampEncoding timestamp_encoding() const { return encoding_; }

 private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  TransactionRecord parse_row(const std::string& line) {
    const auto f = split_csv_line(line);
    if (f.size() != num_columns_)
      throw DataError("expected " + std::to_string(num_columns_) + " columns, found " +
                      std::to_string(f.size()));
    TransactionRecord r;
    r.card_id = f[col_card_];
    r.terminal_id = f[col_terminal_];
    r.timestamp = parse_timestamp(f[col_timestamp_]);
    const auto amount = parse_epoch_seconds(f[col_amount_]);
    if (!amount) throw DataError("unparsable amount '" + f[col_amount_] + "'");
    r.amount = *amount;
    const auto& fl = f[col_fraud_];
    if (fl == "1" || fl == "true" || fl == "TRUE" || fl == "True")
      r.is_fraud = true;
    else if (fl == "0" || fl == "false" || fl == "FALSE" || fl == "False")
      r.is_fraud = false;
    else
      throw DataError("unparsable fraud flag '" + fl + "'");
    validate(r);
    return r;
  }

  std::int64_t parse_timestamp(const std::string& s) {
    if (encoding_ == TimestampEncoding::kUnknown) {
      if (parse_epoch_seconds(s))
        encoding_ = TimestampEncoding::kEpochSeconds;
      else if (parse_rfc3339(s))
        encoding_ = TimestampEncoding::kRfc3339;
      else
        throw DataError("unparsable timestamp '" + s + "'");
    }
    const auto v = encoding_ == TimestampEncoding::kEpochSeconds ? parse_epoch_seconds(s)
                                                                 : parse_rfc3339(s);
    if (!v) throw DataError("unparsable timestamp '" + s + "'");
    return *v;
  }

  std::istream& in_;
  ErrorPolicy policy_;
  std::size_t line_ = 0;
  std::size_t num_columns_ = 0;
  std::size_t col_card_ = 0, col_terminal_ = 0, col_timestamp_ = 0, col_amount_ = 0,
              col_fraud_ = 0;
  TimestampEncoding encoding_ = TimestampEncoding::kUnknown;
  std::vector<RowError> errors_;
};

inline void write_transactions_csv(std::ostream& out, const std::vector<TransactionRecord>& records) {
  out << "card_id,terminal_id,timestamp,amount,is_fraud\n";
  for (const auto& r : records) {
    out << csv_escape(r.card_id) << ',' << csv_escape(r.terminal_id) << ','
        << format_rfc3339(r.timestamp) << ',' << r.amount << ',' << (r.is_fraud ? 1 : 0) << '\n';
  }
}

inline std::vector<TransactionRecord> read_transactions_csv(const std::string& path,
                                                            CsvSchema schema = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return CsvTransactionReader(in, std::move(schema)).read_all();
}

// ---------------------------------------------------------------------------
// Binary snapshot
//
// Layout, all integers little-endian:
//   char[8]  magic "BRGRAPH\0"
//   u32      format version (1)
//   u32      reserved (0)
//   u64      num_cards, num_locations, num_edges
//   u64[C+1] card offsets        u32[E] card adjacency (location ids)
//   u64[L+1] location offsets    u32[E] location adjacency (card ids)
//   u8[C]    fraud flags
//   C x { u32 length, bytes }               card tokens
//   L x { u32 length, bytes, i64 week }     location keys

inline constexpr std::array<char, 8> kSnapshotMagic = {'B', 'R', 'G', 'R', 'A', 'P', 'H', '\0'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  char buf[sizeof(T)];
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    buf[k] = static_cast<char>(u & 0xFF);
    u = static_cast<U>(u >> 8);
  }
  out.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw DataError("truncated graph snapshot");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t k = sizeof(T); k-- > 0;) u = static_cast<decltype(u)>((u << 8) | buf[k]);
  return static_cast<T>(u);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > (1u << 24)) throw DataError("implausible token length in graph snapshot");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("truncated graph snapshot");
  return s;
}

}  // namespace detail

inline void write_snapshot(std::ostream& out, const BipartiteGraph& g) {
  using detail::put_le;
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  put_le<std::uint32_t>(out, kSnapshotVersion);
  put_le<std::uint32_t>(out, 0);
  put_le<std::uint64_t>(out, g.num_cards());
  put_le<std::uint64_t>(out, g.num_locations());
  put_le<std::uint64_t>(out, g.num_edges());
  for (auto v : g.card_offsets()) put_le<std::uint64_t>(out, v);
  for (auto v : g.card_adjacency()) put_le<std::uint32_t>(out, v);
  for (auto v : g.location_offsets()) put_le<std::uint64_t>(out, v);
  for (auto v : g.location_adjacency()) put_le<std::uint32_t>(out, v);
  for (auto v : g.fraud_flags()) put_le<std::uint8_t>(out, v);
  for (const auto& id : g.card_ids()) detail::put_string(out, id);
  for (const auto& loc : g.locations()) {
    detail::put_string(out, loc.terminal_id);
    put_le<std::int64_t>(out, loc.week_index);
  }
  if (!out) throw DataError("failed writing graph snapshot");
}

inline BipartiteGraph read_snapshot(std::istream& in) {
  using detail::get_le;
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kSnapshotMagic)
    throw DataError("not a graph snapshot (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kSnapshotVersion)
    throw DataError("unsupported graph snapshot version " + std::to_string(version));
  get_le<std::uint32_t>(in);
  const auto C = get_le<std::uint64_t>(in);
  const auto L = get_le<std::uint64_t>(in);
  const auto E = get_le<std::uint64_t>(in);
  if (C > UINT32_MAX || L > UINT32_MAX || E > (std::uint64_t{1} << 40))
    throw DataError("implausible counts in graph snapshot");

  std::vector<std::uint64_t> card_off(C + 1), loc_off(L + 1);
  std::vector<std::uint32_t> card_adj(E), loc_adj(E);
  for (auto& v : card_off) v = get_le<std::uint64_t>(in);
  for (auto& v : card_adj) v = get_le<std::uint32_t>(in);
  for (auto& v : loc_off) v = get_le<std::uint64_t>(in);
  for (auto& v : loc_adj) v = get_le<std::uint32_t>(in);
  std::vector<std::uint8_t> fraud(C);
  for (auto& v : fraud) v = get_le<std::uint8_t>(in);
  std::vector<std::string> cards(C);
  for (auto& s : cards) s = detail::get_string(in);
  std::vector<LocationBucket> locs(L);
  for (auto& b : locs) {
    b.terminal_id = detail::get_string(in);
    b.week_index = get_le<std::int64_t>(in);
  }

  if (card_off.front() != 0 || card_off.back() != E || loc_off.front() != 0 || loc_off.back() != E)
    throw DataError("corrupt offsets in graph snapshot");
  std::vector<std::pair<BipartiteGraph::Index, BipartiteGraph::Index>> edges;
  edges.reserve(E);
  for (std::uint64_t i = 0; i < C; ++i) {
    if (card_off[i] > card_off[i + 1]) throw DataError("corrupt offsets in graph snapshot");
    for (auto e = card_off[i]; e < card_off[i + 1]; ++e) {
      if (card_adj[e] >= L) throw DataError("location index out of range in graph snapshot");
      edges.emplace_back(static_cast<BipartiteGraph::Index>(i), card_adj[e]);
    }
  }
  BipartiteGraph g(std::move(cards), std::move(locs), std::move(fraud), std::move(edges));
  if (g.num_edges() != E || g.card_adjacency() != card_adj)
    throw DataError("graph snapshot has duplicate or unsorted card adjacency");
  if (!std::equal(loc_off.begin(), loc_off.end(), g.location_offsets().begin()) ||
      g.location_adjacency() != loc_adj)
    throw DataError("graph snapshot adjacency directions are not transposes");
  return g;
}

inline void save_snapshot(const std::string& path, const BipartiteGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create " + path);
  write_snapshot(out, g);
}

inline BipartiteGraph load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_snapshot(in);
}

inline nlohmann::json graph_stats(const BipartiteGraph& g) {
  return {{"cards", g.num_cards()},
          {"locations", g.num_locations()},
          {"edges", g.num_edges()},
          {"fraud_cards", g.num_fraud_cards()}};
}

}  // namespace breachradar
