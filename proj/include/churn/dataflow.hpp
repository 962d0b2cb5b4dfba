#ifndef CHURN_DATAFLOW_HPP
#define CHURN_DATAFLOW_HPP

#include <algorithm>
#include <atomic>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <omp.h>

#include "churn/rng.hpp"

// An in-process, lazy, partitioned dataflow engine: plans are immutable
// DAGs of source/map/filter/reduce_by_key/join nodes; nothing runs until
// execute(). Narrow chains (map/filter) are fused into one pass per
// partition; wide nodes (reduce_by_key/join) shuffle by key hash and are
// built stage by stage in dependency order. reference::evaluate is the
// serial materializing evaluator the tests and the benchmark compare
// against.
//
// User functions must be pure: they run concurrently across partitions
// and may run more than once for shared subplans. Combine functions must
// be associative and commutative (reduction order is partition-major).
namespace churn::dataflow {

struct ExecOptions {
    std::size_t workers = 1;
    std::size_t partitions = 1;
};

class ExecError : public std::runtime_error {
public:
    ExecError(const std::string& node, const std::string& what)
        : std::runtime_error("dataflow node " + node + ": " + what), node_(node) {}
    const std::string& node() const { return node_; }

private:
    std::string node_;
};

inline std::uint64_t mix_u64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

// Deterministic shuffle hashing. std::hash is unspecified per
// implementation and has no pair support, so keys get a pinned mix.
template <typename K>
struct KeyHash;

template <std::integral K>
struct KeyHash<K> {
    std::uint64_t operator()(const K& k) const { return mix_u64(static_cast<std::uint64_t>(k)); }
};

template <>
struct KeyHash<std::string> {
    std::uint64_t operator()(const std::string& s) const { return mix_u64(fnv1a64(s)); }
};

template <typename A, typename B>
struct KeyHash<std::pair<A, B>> {
    std::uint64_t operator()(const std::pair<A, B>& p) const {
        return mix_u64(KeyHash<A>{}(p.first) * 0x9e3779b97f4a7c15ULL ^ KeyHash<B>{}(p.second));
    }
};

namespace detail {

inline std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

struct Runtime;

struct NodeBase {
    explicit NodeBase(const char* kind) : label(std::string(kind) + "#" + std::to_string(next_node_id())) {}
    virtual ~NodeBase() = default;
    NodeBase(const NodeBase&) = delete;
    NodeBase& operator=(const NodeBase&) = delete;

    virtual std::vector<const NodeBase*> children() const = 0;
    // Wide nodes materialize their shuffle here; called once per node, in
    // dependency order, from a single thread.
    virtual void prepare(Runtime&) const {}

    std::string label;
};

struct Runtime {
    std::size_t partitions = 1;
    std::size_t workers = 1;
    // shuffle outputs keyed by node; written only between parallel phases
    std::unordered_map<const void*, std::shared_ptr<void>> cache;

    template <typename D, typename Build>
    void build_once(const void* key, Build build) {
        if (cache.find(key) == cache.end()) cache.emplace(key, std::make_shared<D>(build()));
    }

    template <typename D>
    const D& get(const void* key) const {
        return *static_cast<const D*>(cache.at(key).get());
    }
};

template <typename T>
struct Node : NodeBase {
    using NodeBase::NodeBase;
    using Sink = std::function<void(const T&)>;

    // Streams partition p of this node's output. Narrow nodes recurse into
    // their child with a wrapped sink, so chains run in a single pass.
    virtual void scan(Runtime& rt, std::size_t p, const Sink& sink) const = 0;

    // Naive materializing evaluation, one buffer per node. Kept as the
    // serial reference semantics; intentionally shares nothing with scan().
    virtual std::vector<T> reference_rows() const = 0;
};

// Runs `body(i)` for i in [0, n) on a bounded pool; first exception wins
// and is rethrown after the region (throwing across an OpenMP region
// boundary is undefined).
template <typename Body>
void parallel_indexed(std::size_t n, std::size_t workers, Body body) {
    std::exception_ptr error;
#pragma omp parallel for num_threads(static_cast<int>(workers)) schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(churn_dataflow_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

template <typename T>
struct SourceNode final : Node<T> {
    explicit SourceNode(std::vector<T> rows) : Node<T>("source"), rows_(std::move(rows)) {}

    std::vector<const NodeBase*> children() const override { return {}; }

    void scan(Runtime& rt, std::size_t p, const typename Node<T>::Sink& sink) const override {
        // round-robin partitioning
        for (std::size_t i = p; i < rows_.size(); i += rt.partitions) sink(rows_[i]);
    }

    std::vector<T> reference_rows() const override { return rows_; }

    std::vector<T> rows_;
};

template <typename In, typename F>
struct MapNode final
    : Node<std::remove_cvref_t<std::invoke_result_t<const F&, const In&>>> {
    using Out = std::remove_cvref_t<std::invoke_result_t<const F&, const In&>>;

    MapNode(std::shared_ptr<const Node<In>> child, F fn)
        : Node<Out>("map"), child_(std::move(child)), fn_(std::move(fn)) {}

    std::vector<const NodeBase*> children() const override { return {child_.get()}; }

    void prepare(Runtime&) const override {}

    void scan(Runtime& rt, std::size_t p, const typename Node<Out>::Sink& sink) const override {
        child_->scan(rt, p, [this, &sink](const In& v) {
            std::optional<Out> out;
            try {
                out.emplace(fn_(v));
            } catch (const std::exception& e) {
                throw ExecError(this->label, e.what());
            } catch (...) {
                throw ExecError(this->label, "user function failed");
            }
            sink(*out);
        });
    }

    std::vector<Out> reference_rows() const override {
        std::vector<Out> out;
        for (const In& v : child_->reference_rows()) out.push_back(fn_(v));
        return out;
    }

    std::shared_ptr<const Node<In>> child_;
    F fn_;
};

template <typename T, typename F>
struct FilterNode final : Node<T> {
    FilterNode(std::shared_ptr<const Node<T>> child, F pred)
        : Node<T>("filter"), child_(std::move(child)), pred_(std::move(pred)) {}

    std::vector<const NodeBase*> children() const override { return {child_.get()}; }

    void scan(Runtime& rt, std::size_t p, const typename Node<T>::Sink& sink) const override {
        child_->scan(rt, p, [this, &sink](const T& v) {
            bool keep = false;
            try {
                keep = static_cast<bool>(pred_(v));
            } catch (const std::exception& e) {
                throw ExecError(this->label, e.what());
            } catch (...) {
                throw ExecError(this->label, "user function failed");
            }
            if (keep) sink(v);
        });
    }

    std::vector<T> reference_rows() const override {
        std::vector<T> out;
        for (const T& v : child_->reference_rows())
            if (pred_(v)) out.push_back(v);
        return out;
    }

    std::shared_ptr<const Node<T>> child_;
    F pred_;
};

template <typename K>
std::size_t bucket_of(const K& key, std::size_t partitions) {
    return static_cast<std::size_t>(KeyHash<K>{}(key) % partitions);
}

template <typename K, typename V, typename F>
struct ReduceByKeyNode final : Node<std::pair<K, V>> {
    using Row = std::pair<K, V>;
    using Buckets = std::vector<std::vector<Row>>;
    using Map = std::unordered_map<K, V, KeyHash<K>>;

    ReduceByKeyNode(std::shared_ptr<const Node<Row>> child, F combine)
        : Node<Row>("reduce_by_key"), child_(std::move(child)), combine_(std::move(combine)) {}

    std::vector<const NodeBase*> children() const override { return {child_.get()}; }

    void prepare(Runtime& rt) const override {
        rt.build_once<Buckets>(this, [&] { return build(rt); });
    }

    void scan(Runtime& rt, std::size_t p, const typename Node<Row>::Sink& sink) const override {
        for (const Row& kv : rt.get<Buckets>(this)[p]) sink(kv);
    }

    std::vector<Row> reference_rows() const override {
        std::vector<Row> acc;
        for (const Row& kv : child_->reference_rows()) {
            auto it = std::find_if(acc.begin(), acc.end(),
                                   [&](const Row& r) { return r.first == kv.first; });
            if (it == acc.end())
                acc.push_back(kv);
            else
                it->second = combine_(it->second, kv.second);
        }
        return acc;
    }

private:
    V combine_checked(const V& a, const V& b) const {
        try {
            return combine_(a, b);
        } catch (const std::exception& e) {
            throw ExecError(this->label, e.what());
        } catch (...) {
            throw ExecError(this->label, "combine function failed");
        }
    }

    Buckets build(Runtime& rt) const {
        const std::size_t parts = rt.partitions;
        // map-side combine per child partition, then a fixed-order merge so
        // the result does not depend on scheduling
        std::vector<std::vector<Map>> local(parts, std::vector<Map>(parts));
        parallel_indexed(parts, rt.workers, [&](std::size_t cp) {
            child_->scan(rt, cp, [&](const Row& kv) {
                Map& m = local[cp][bucket_of(kv.first, parts)];
                auto [it, fresh] = m.try_emplace(kv.first, kv.second);
                if (!fresh) it->second = combine_checked(it->second, kv.second);
            });
        });
        Buckets buckets(parts);
        parallel_indexed(parts, rt.workers, [&](std::size_t p) {
            Map merged;
            for (std::size_t cp = 0; cp < parts; ++cp)
                for (auto& kv : local[cp][p]) {
                    auto [it, fresh] = merged.try_emplace(kv.first, std::move(kv.second));
                    if (!fresh) it->second = combine_checked(it->second, kv.second);
                }
            buckets[p].assign(std::make_move_iterator(merged.begin()),
                              std::make_move_iterator(merged.end()));
            if constexpr (std::totally_ordered<K>)
                std::sort(buckets[p].begin(), buckets[p].end(),
                          [](const Row& a, const Row& b) { return a.first < b.first; });
        });
        return buckets;
    }

    std::shared_ptr<const Node<Row>> child_;
    F combine_;
};

template <typename K, typename V, typename W>
struct JoinNode final : Node<std::pair<K, std::pair<V, W>>> {
    using Out = std::pair<K, std::pair<V, W>>;
    using Buckets = std::vector<std::vector<Out>>;

    JoinNode(std::shared_ptr<const Node<std::pair<K, V>>> lhs,
             std::shared_ptr<const Node<std::pair<K, W>>> rhs)
        : Node<Out>("join"), lhs_(std::move(lhs)), rhs_(std::move(rhs)) {}

    std::vector<const NodeBase*> children() const override { return {lhs_.get(), rhs_.get()}; }

    void prepare(Runtime& rt) const override {
        rt.build_once<Buckets>(this, [&] { return build(rt); });
    }

    void scan(Runtime& rt, std::size_t p, const typename Node<Out>::Sink& sink) const override {
        for (const Out& row : rt.get<Buckets>(this)[p]) sink(row);
    }

    std::vector<Out> reference_rows() const override {
        std::vector<Out> out;
        for (const auto& [lk, lv] : lhs_->reference_rows())
            for (const auto& [rk, rv] : rhs_->reference_rows())
                if (lk == rk) out.push_back({lk, {lv, rv}});
        return out;
    }

private:
    Buckets build(Runtime& rt) const {
        const std::size_t parts = rt.partitions;
        std::vector<std::vector<std::vector<std::pair<K, V>>>> lhs_local(
            parts, std::vector<std::vector<std::pair<K, V>>>(parts));
        std::vector<std::vector<std::vector<std::pair<K, W>>>> rhs_local(
            parts, std::vector<std::vector<std::pair<K, W>>>(parts));
        parallel_indexed(parts, rt.workers, [&](std::size_t cp) {
            lhs_->scan(rt, cp, [&](const std::pair<K, V>& kv) {
                lhs_local[cp][bucket_of(kv.first, parts)].push_back(kv);
            });
            rhs_->scan(rt, cp, [&](const std::pair<K, W>& kv) {
                rhs_local[cp][bucket_of(kv.first, parts)].push_back(kv);
            });
        });
        Buckets buckets(parts);
        parallel_indexed(parts, rt.workers, [&](std::size_t p) {
            // hash join: build on lhs, probe with rhs, both in fixed
            // partition-major order
            std::unordered_map<K, std::vector<V>, KeyHash<K>> built;
            for (std::size_t cp = 0; cp < parts; ++cp)
                for (auto& kv : lhs_local[cp][p]) built[kv.first].push_back(std::move(kv.second));
            std::vector<Out>& out = buckets[p];
            for (std::size_t cp = 0; cp < parts; ++cp)
                for (const auto& [k, w] : rhs_local[cp][p]) {
                    auto it = built.find(k);
                    if (it == built.end()) continue;
                    for (const V& v : it->second) out.push_back({k, {v, w}});
                }
            if constexpr (std::totally_ordered<K>)
                std::stable_sort(out.begin(), out.end(),
                                 [](const Out& a, const Out& b) { return a.first < b.first; });
        });
        return buckets;
    }

    std::shared_ptr<const Node<std::pair<K, V>>> lhs_;
    std::shared_ptr<const Node<std::pair<K, W>>> rhs_;
};

inline void post_order(const NodeBase* node, std::unordered_set<const NodeBase*>& visited,
                       const std::function<void(const NodeBase*)>& visit) {
    if (!visited.insert(node).second) return;
    for (const NodeBase* child : node->children()) post_order(child, visited, visit);
    visit(node);
}

} // namespace detail

template <typename T>
class Plan {
public:
    using value_type = T;

    Plan() = default;
    explicit Plan(std::shared_ptr<const detail::Node<T>> node) : node_(std::move(node)) {}

    bool valid() const { return node_ != nullptr; }

    const std::string& label() const { return require()->label; }

    template <typename F>
    auto map(F fn) const {
        using Out = std::remove_cvref_t<std::invoke_result_t<const F&, const T&>>;
        return Plan<Out>(std::make_shared<detail::MapNode<T, F>>(require(), std::move(fn)));
    }

    template <typename F>
    Plan<T> filter(F pred) const {
        return Plan<T>(std::make_shared<detail::FilterNode<T, F>>(require(), std::move(pred)));
    }

    std::shared_ptr<const detail::Node<T>> require() const {
        if (!node_) throw std::invalid_argument("dataflow: plan has no node");
        return node_;
    }

private:
    std::shared_ptr<const detail::Node<T>> node_;
};

template <typename T>
Plan<T> source(std::vector<T> records) {
    return Plan<T>(std::make_shared<detail::SourceNode<T>>(std::move(records)));
}

template <typename K, typename V, typename F>
Plan<std::pair<K, V>> reduce_by_key(const Plan<std::pair<K, V>>& in, F combine) {
    return Plan<std::pair<K, V>>(
        std::make_shared<detail::ReduceByKeyNode<K, V, F>>(in.require(), std::move(combine)));
}

template <typename K, typename V, typename W>
Plan<std::pair<K, std::pair<V, W>>> join(const Plan<std::pair<K, V>>& lhs,
                                         const Plan<std::pair<K, W>>& rhs) {
    return Plan<std::pair<K, std::pair<V, W>>>(
        std::make_shared<detail::JoinNode<K, V, W>>(lhs.require(), rhs.require()));
}

// Sorts whenever the record type is ordered; partition scheduling is
// nondeterministic, so collect-time ordering comes from this sort.
template <typename T>
void canonical_sort(std::vector<T>& rows) {
    if constexpr (std::totally_ordered<T>) std::sort(rows.begin(), rows.end());
}

// Materializes the plan: builds each shuffle stage in dependency order,
// then streams every partition of the final narrow chain on the worker
// pool. The result is a canonical-order list.
template <typename T>
std::vector<T> execute(const Plan<T>& plan, const ExecOptions& opts) {
    if (opts.workers < 1) throw std::invalid_argument("dataflow: workers must be >= 1");
    if (opts.partitions < 1) throw std::invalid_argument("dataflow: partitions must be >= 1");

    const auto root = plan.require();
    detail::Runtime rt{opts.partitions, opts.workers, {}};

    std::unordered_set<const detail::NodeBase*> visited;
    detail::post_order(root.get(), visited,
                       [&rt](const detail::NodeBase* n) { n->prepare(rt); });

    std::vector<std::vector<T>> parts(opts.partitions);
    detail::parallel_indexed(opts.partitions, opts.workers, [&](std::size_t p) {
        root->scan(rt, p, [&parts, p](const T& v) { parts[p].push_back(v); });
    });

    std::vector<T> out;
    std::size_t total = 0;
    for (const auto& part : parts) total += part.size();
    out.reserve(total);
    for (auto& part : parts)
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    canonical_sort(out);
    return out;
}

namespace reference {

// Serial reference evaluation: every node materializes its full output.
template <typename T>
std::vector<T> evaluate(const Plan<T>& plan) {
    return plan.require()->reference_rows();
}

} // namespace reference

} // namespace churn::dataflow

#endif
