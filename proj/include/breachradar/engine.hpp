#pragma once

// Partitioned, bulk-synchronous execution of the detector updates.
//
// The global edge sequence (card-major) is cut into contiguous, edge-balanced
// slices, one per worker. In a superstep each worker streams its slice and
// combines its messages (theta toward cards, blame toward locations) into one
// partial per destination. After a barrier the owner of each destination adds
// up the partials addressed to it. Partials are FixedPointSum values, so the
// reduction is exact and every worker count reproduces the sequential
// detector bit for bit.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "breachradar/detector.hpp"
#include "breachradar/graph.hpp"

namespace breachradar {

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t x) const { return x >= begin && x < end; }
  bool operator==(const IndexRange&) const = default;
};

struct Partition {
  std::size_t id = 0;
  IndexRange owned_locations;
  IndexRange owned_cards;
  IndexRange edge_slice;
  bool operator==(const Partition&) const = default;
};

// Edge slices are [p*E/w, (p+1)*E/w). A card belongs to the partition holding
// its first edge; a location to the partition whose share of the
// location-side adjacency contains its first entry.
inline std::vector<Partition> plan_partitions(const BipartiteGraph& g, std::size_t num_workers) {
  if (num_workers < 1) throw StructuralError("num_workers must be >= 1");
  const std::size_t E = g.num_edges();
  const auto& card_off = g.card_offsets();
  const auto& loc_off = g.location_offsets();
  auto cut = [&](std::size_t p) { return p * E / num_workers; };
  // First index whose offset reaches `edge`; offsets are nondecreasing.
  auto first_at = [](const std::vector<std::size_t>& off, std::size_t edge) {
    return static_cast<std::size_t>(std::lower_bound(off.begin(), off.end() - 1, edge) - off.begin());
  };
  std::vector<Partition> plan(num_workers);
  for (std::size_t p = 0; p < num_workers; ++p) {
    Partition& part = plan[p];
    part.id = p;
    part.edge_slice = {cut(p), cut(p + 1)};
    part.owned_cards = {p == 0 ? 0 : first_at(card_off, cut(p)),
                        p + 1 == num_workers ? g.num_cards() : first_at(card_off, cut(p + 1))};
    part.owned_locations = {p == 0 ? 0 : first_at(loc_off, cut(p)),
                            p + 1 == num_workers ? g.num_locations() : first_at(loc_off, cut(p + 1))};
  }
  return plan;
}

// One partition's outgoing messages, combined per destination. Destinations
// form the contiguous window [first, first + payloads.size()).
struct MessageBatch {
  std::size_t first = 0;
  std::vector<FixedPointSum> payloads;

  bool covers(std::size_t dest) const { return dest >= first && dest - first < payloads.size(); }
  FixedPointSum& operator[](std::size_t dest) { return payloads[dest - first]; }
  const FixedPointSum& operator[](std::size_t dest) const { return payloads[dest - first]; }
  void clear() { std::fill(payloads.begin(), payloads.end(), FixedPointSum{}); }
};

// Fixed set of threads executing one task per partition; run() returns once
// every partition finished, which is the superstep barrier.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t n) : count_(n) {
    for (std::size_t w = 1; w < n; ++w) threads_.emplace_back([this, w] { loop(w); });
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;
  ~WorkerPool() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const { return count_; }

  // Runs task(w) on every worker and returns once all have finished. The
  // first exception thrown by any worker is rethrown here.
  void run(const std::function<void(std::size_t)>& task) {
    if (count_ == 1) {
      task(0);
      return;
    }
    {
      std::lock_guard lk(mu_);
      task_ = &task;
      pending_ = count_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    invoke(task, 0);
    std::unique_lock lk(mu_);
    done_.wait(lk, [&] { return pending_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
  }

 private:
  void loop(std::size_t w) {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task = nullptr;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        task = task_;
      }
      invoke(*task, w);
      {
        std::lock_guard lk(mu_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  void invoke(const std::function<void(std::size_t)>& task, std::size_t w) {
    try {
      task(w);
    } catch (...) {
      std::lock_guard lk(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }

  std::size_t count_;
  std::vector<std::thread> threads_;
  std::exception_ptr error_;
  std::mutex mu_;
  std::condition_variable cv_, done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
};

struct SuperstepTiming {
  std::size_t iteration = 0;
  std::string superstep;
  std::size_t worker_count = 0;
  double millis = 0.0;
};

class Engine {
 public:
  using Index = BipartiteGraph::Index;

  Engine(const BipartiteGraph& g, std::size_t num_workers)
      : graph_(g),
        layout_(std::make_shared<const BlameLayout>(g)),
        plan_(plan_partitions(g, num_workers)),
        pool_(num_workers),
        card_batches_(plan_.size()),
        location_batches_(plan_.size()),
        card_sum_(g.num_cards(), 0.0) {
    const auto& off = g.card_offsets();
    for (std::size_t p = 0; p < plan_.size(); ++p) {
      const IndexRange slice = plan_[p].edge_slice;
      if (slice.size() == 0) continue;
      // Cards with an edge in the slice; the first and last may be shared.
      const auto first = static_cast<std::size_t>(std::upper_bound(off.begin(), off.end(), slice.begin) - off.begin() - 1);
      const auto last = static_cast<std::size_t>(std::upper_bound(off.begin(), off.end(), slice.end - 1) - off.begin() - 1);
      card_batches_[p].first = first;
      card_batches_[p].payloads.resize(last - first + 1);
      location_batches_[p].payloads.resize(g.num_locations());
    }
  }

  const std::vector<Partition>& partitions() const { return plan_; }
  std::size_t num_workers() const { return plan_.size(); }
  const std::vector<SuperstepTiming>& timings() const { return timings_; }
  const std::shared_ptr<const BlameLayout>& layout() const { return layout_; }

  BlameMatrix uniform_blames() {
    std::vector<double> v(layout_->num_slots());
    pool_.run([&](std::size_t p) {
      for_fraud_edges(plan_[p], [&](Index card, std::size_t edge, std::size_t slot) {
        (void)edge;
        v[slot] = 1.0 / static_cast<double>(graph_.degree_of_card(card));
      });
    });
    return {layout_, std::move(v)};
  }

  // Locations send theta to their cards; cards sum the messages; each edge
  // then sets blame = theta_j / sum.
  BlameMatrix superstep_update_blames(const ThetaVector& theta) {
    const auto t0 = Clock::now();
    std::vector<double> v(layout_->num_slots());
    pool_.run([&](std::size_t p) {
      MessageBatch& out = card_batches_[p];
      out.clear();
      for_fraud_edges(plan_[p], [&](Index card, std::size_t edge, std::size_t) {
        out[card].add(theta[graph_.edge_location(edge)]);
      });
    });
    pool_.run([&](std::size_t p) {
      const IndexRange cards = plan_[p].owned_cards;
      for (std::size_t i = cards.begin; i < cards.end; ++i) {
        if (!graph_.is_fraud(static_cast<Index>(i))) continue;
        FixedPointSum total;
        for (std::size_t q = p; q < plan_.size(); ++q) {
          if (plan_[q].edge_slice.size() == 0) continue;
          if (!card_batches_[q].covers(i)) break;
          total.add(card_batches_[q][i]);
        }
        card_sum_[i] = total.value();
      }
    });
    pool_.run([&](std::size_t p) {
      for_fraud_edges(plan_[p], [&](Index card, std::size_t edge, std::size_t slot) {
        v[slot] = theta[graph_.edge_location(edge)] / card_sum_[card];
      });
    });
    record("update_blames", t0);
    return {layout_, std::move(v)};
  }

  // Edges send their blame to their location; owners add the partials.
  std::vector<double> aggregate_blames(const BlameMatrix& blames) {
    const auto b = blames.values();
    std::vector<double> z(graph_.num_locations(), 0.0);
    pool_.run([&](std::size_t p) {
      MessageBatch& out = location_batches_[p];
      out.clear();
      for_fraud_edges(plan_[p], [&](Index, std::size_t edge, std::size_t slot) {
        out[graph_.edge_location(edge)].add(b[slot]);
      });
    });
    pool_.run([&](std::size_t p) {
      const IndexRange locs = plan_[p].owned_locations;
      for (std::size_t j = locs.begin; j < locs.end; ++j) {
        FixedPointSum total;
        for (const auto& batch : location_batches_)
          if (batch.covers(j)) total.add(batch[j]);
        z[j] = total.value();
      }
    });
    return z;
  }

  ThetaVector superstep_update_theta(const BlameMatrix& blames, const PriorParams& prior) {
    const auto t0 = Clock::now();
    auto theta = theta_from_blame_sums(graph_, aggregate_blames(blames), prior);
    record("update_theta", t0);
    return theta;
  }

  DetectionResult run(const PriorParams& prior, const IterationObserver& observer = {}) {
    iteration_ = 0;
    Adapter a{*this};
    return alternate(graph_, a, prior, [&](std::size_t it, const ThetaVector& th, double r) {
      iteration_ = it + 1;
      if (observer) observer(it, th, r);
    });
  }

 private:
  using Clock = std::chrono::steady_clock;

  struct Adapter {
    Engine& e;
    BlameMatrix uniform_blames() const { return e.uniform_blames(); }
    std::vector<double> blame_sums(const BlameMatrix& b) const {
      const auto t0 = Clock::now();
      auto z = e.aggregate_blames(b);
      e.record("update_theta", t0);
      return z;
    }
    BlameMatrix update_blames(const ThetaVector& th) const { return e.superstep_update_blames(th); }
  };

  // Visits the fraud-card edges of a partition's slice in global edge order.
  template <class Fn>
  void for_fraud_edges(const Partition& part, Fn&& fn) const {
    const auto& off = graph_.card_offsets();
    std::size_t e = part.edge_slice.begin;
    if (e >= part.edge_slice.end) return;
    auto card = static_cast<Index>(std::upper_bound(off.begin(), off.end(), e) - off.begin() - 1);
    while (e < part.edge_slice.end) {
      const std::size_t card_end = std::min(off[card + 1], part.edge_slice.end);
      const std::size_t row = layout_->row_of_card(card);
      if (row != BlameLayout::kNoRow) {
        const std::size_t base = layout_->row_begin(row) - off[card];
        for (; e < card_end; ++e) fn(card, e, base + e);
      } else {
        e = card_end;
      }
      ++card;
    }
  }

  void record(const char* name, Clock::time_point t0) {
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    timings_.push_back({iteration_, name, plan_.size(), ms});
  }

  const BipartiteGraph& graph_;
  std::shared_ptr<const BlameLayout> layout_;
  std::vector<Partition> plan_;
  WorkerPool pool_;
  std::vector<MessageBatch> card_batches_;      // per partition, toward cards
  std::vector<MessageBatch> location_batches_;  // per partition, toward locations
  std::vector<double> card_sum_;
  std::vector<SuperstepTiming> timings_;
  std::size_t iteration_ = 0;
};

inline DetectionResult run_engine(const BipartiteGraph& g, const PriorParams& prior,
                                  std::size_t num_workers, const IterationObserver& observer = {}) {
  Engine e(g, num_workers);
  return e.run(prior, observer);
}

}  // namespace breachradar
