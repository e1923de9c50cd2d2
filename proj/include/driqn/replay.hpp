#pragma once

// Subgroup-partitioned experience buffer with per-subgroup ring storage and
// independent per-subgroup sampling. Pooled sampling (uniform over the union)
// backs the agents that ignore subgroup structure.

#include <optional>
#include <vector>

#include "driqn/common.hpp"
#include "driqn/rng.hpp"
#include "driqn/world.hpp"

namespace driqn {

struct Transition {
    Observation obs;       // post-noise
    int action = 0;
    double reward = 0.0;
    Observation next_obs;  // post-noise
    bool done = false;
    int subgroup_id = 0;
};

class SubgroupBuffer {
public:
    SubgroupBuffer(int subgroups, size_t total_capacity)
        : per_capacity_(std::max<size_t>(1, total_capacity / std::max(1, subgroups))),
          rings_(subgroups), next_(subgroups, 0), pushed_(subgroups, 0) {
        if (subgroups < 1) throw ConfigError("buffer needs at least one subgroup");
    }

    int subgroups() const { return static_cast<int>(rings_.size()); }
    size_t capacity_per_subgroup() const { return per_capacity_; }
    size_t size(int j) const { return rings_[j].size(); }
    std::uint64_t pushed(int j) const { return pushed_[j]; }

    size_t total_size() const {
        size_t s = 0;
        for (const auto& r : rings_) s += r.size();
        return s;
    }

    void push(const Transition& t) {
        if (t.subgroup_id < 0 || t.subgroup_id >= subgroups())
            throw std::invalid_argument("push: unknown subgroup id " + std::to_string(t.subgroup_id));
        auto& ring = rings_[t.subgroup_id];
        auto& next = next_[t.subgroup_id];
        if (ring.size() < per_capacity_) {
            ring.push_back(t);
        } else {
            ring[next] = t;  // FIFO eviction
            next = (next + 1) % per_capacity_;
        }
        ++pushed_[t.subgroup_id];
    }

    // Stored transitions of subgroup j, oldest first.
    std::vector<const Transition*> in_insertion_order(int j) const {
        const auto& ring = rings_[j];
        std::vector<const Transition*> out;
        out.reserve(ring.size());
        const size_t start = ring.size() < per_capacity_ ? 0 : next_[j];
        for (size_t i = 0; i < ring.size(); ++i)
            out.push_back(&ring[(start + i) % ring.size()]);
        return out;
    }

    // Uniform-with-replacement draw of c transitions from every subgroup that
    // holds at least min_fill; subgroups below the threshold are skipped (the
    // caller's J shrinks). Empty result means no subgroup is ready.
    std::vector<std::pair<int, std::vector<const Transition*>>>
    sample_per_subgroup(size_t c, size_t min_fill, Rng& rng) const {
        std::vector<std::pair<int, std::vector<const Transition*>>> out;
        for (int j = 0; j < subgroups(); ++j) {
            const auto& ring = rings_[j];
            if (ring.size() < std::max<size_t>(1, min_fill)) continue;
            std::vector<const Transition*> batch(c);
            for (size_t k = 0; k < c; ++k) batch[k] = &ring[rng.uniform_int(ring.size())];
            out.emplace_back(j, std::move(batch));
        }
        return out;
    }

    // Uniform-with-replacement draw over the union of all subgroups. With one
    // subgroup this consumes the RNG identically to sample_per_subgroup.
    std::vector<const Transition*> sample_pooled(size_t c, Rng& rng) const {
        const size_t total = total_size();
        std::vector<const Transition*> batch(c);
        for (size_t k = 0; k < c; ++k) {
            size_t idx = rng.uniform_int(total);
            for (const auto& ring : rings_) {
                if (idx < ring.size()) {
                    batch[k] = &ring[idx];
                    break;
                }
                idx -= ring.size();
            }
        }
        return batch;
    }

private:
    size_t per_capacity_;
    std::vector<std::vector<Transition>> rings_;
    std::vector<size_t> next_;
    std::vector<std::uint64_t> pushed_;
};

}  // namespace driqn
