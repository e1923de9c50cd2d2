#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>

#include "driqn/replay.hpp"

using namespace driqn;

namespace {

Transition make_transition(int subgroup, double tag) {
    Transition t;
    t.subgroup_id = subgroup;
    t.reward = tag;  // sequence marker for ordering checks
    t.obs.lidar.assign(4, 1.0);
    t.next_obs.lidar.assign(4, 1.0);
    return t;
}

}  // namespace

TEST_CASE("push and eviction") {
    SUBCASE("push into empty buffer") {
        SubgroupBuffer buf(3, 30);
        buf.push(make_transition(1, 0.0));
        CHECK(buf.size(0) == 0);
        CHECK(buf.size(1) == 1);
        CHECK(buf.size(2) == 0);
    }
    SUBCASE("capacity c plus one push drops the oldest") {
        SubgroupBuffer buf(1, 5);
        for (int i = 0; i < 6; ++i) buf.push(make_transition(0, i));
        CHECK(buf.size(0) == 5);
        const auto order = buf.in_insertion_order(0);
        CHECK(order.front()->reward == 1.0);  // element 0 evicted
        CHECK(order.back()->reward == 5.0);
    }
    SUBCASE("unknown subgroup id is a contract violation") {
        SubgroupBuffer buf(2, 10);
        CHECK_THROWS_AS(buf.push(make_transition(5, 0.0)), std::invalid_argument);
        CHECK_THROWS_AS(buf.push(make_transition(-1, 0.0)), std::invalid_argument);
    }
    SUBCASE("interleaved pushes preserve per-subgroup order") {
        SubgroupBuffer buf(3, 300);
        Rng rng(1);
        std::map<int, double> next_tag;
        for (int i = 0; i < 250; ++i) {
            const int j = static_cast<int>(rng.uniform_int(3));
            buf.push(make_transition(j, next_tag[j]++));
        }
        for (int j = 0; j < 3; ++j) {
            const auto order = buf.in_insertion_order(j);
            for (size_t i = 0; i + 1 < order.size(); ++i)
                CHECK(order[i]->reward + 1.0 == order[i + 1]->reward);
        }
    }
}

TEST_CASE("per-subgroup sampling") {
    SUBCASE("with-replacement draw from a single element") {
        SubgroupBuffer buf(1, 10);
        buf.push(make_transition(0, 42.0));
        Rng rng(2);
        const auto batches = buf.sample_per_subgroup(4, 1, rng);
        REQUIRE(batches.size() == 1);
        CHECK(batches[0].second.size() == 4);
        for (const auto* t : batches[0].second) CHECK(t->reward == 42.0);
    }
    SUBCASE("batches are subgroup-pure") {
        SubgroupBuffer buf(3, 300);
        Rng rng(3);
        for (int i = 0; i < 200; ++i)
            buf.push(make_transition(static_cast<int>(rng.uniform_int(3)), 0.0));
        const auto batches = buf.sample_per_subgroup(16, 1, rng);
        for (const auto& [j, batch] : batches)
            for (const auto* t : batch) CHECK(t->subgroup_id == j);
    }
    SUBCASE("subgroups below the fill threshold are excluded") {
        SubgroupBuffer buf(2, 200);
        for (int i = 0; i < 50; ++i) buf.push(make_transition(0, 0.0));
        for (int i = 0; i < 5; ++i) buf.push(make_transition(1, 0.0));
        Rng rng(4);
        const auto batches = buf.sample_per_subgroup(8, 10, rng);
        REQUIRE(batches.size() == 1);
        CHECK(batches[0].first == 0);
    }
    SUBCASE("no subgroup ready yields an empty result") {
        SubgroupBuffer buf(2, 200);
        buf.push(make_transition(0, 0.0));
        Rng rng(5);
        CHECK(buf.sample_per_subgroup(8, 10, rng).empty());
    }
    SUBCASE("sampling is uniform over a filled subgroup") {
        SubgroupBuffer buf(1, 100);
        for (int i = 0; i < 100; ++i) buf.push(make_transition(0, i));
        Rng rng(6);
        std::map<double, int> counts;
        const int draws = 100000;
        int done = 0;
        while (done < draws) {
            const auto batches = buf.sample_per_subgroup(100, 1, rng);
            for (const auto* t : batches[0].second) {
                ++counts[t->reward];
                ++done;
            }
        }
        // binomial: p = 1/100, sigma = sqrt(n p (1-p)) ~ 31.5; 3 sigma band
        for (const auto& [tag, count] : counts)
            CHECK(std::abs(count - draws / 100.0) < 3.0 * std::sqrt(draws * 0.01 * 0.99));
    }
}

TEST_CASE("pooled sampling matches per-subgroup draws when there is one group") {
    SubgroupBuffer buf(1, 50);
    for (int i = 0; i < 37; ++i) buf.push(make_transition(0, i));
    Rng r1(7), r2(7);
    const auto pooled = buf.sample_pooled(16, r1);
    const auto grouped = buf.sample_per_subgroup(16, 1, r2);
    REQUIRE(grouped.size() == 1);
    for (size_t i = 0; i < pooled.size(); ++i)
        CHECK(pooled[i] == grouped[0].second[i]);  // same objects, same draws
}

TEST_CASE("random operation traces keep the invariants") {
    Rng rng(8);
    SubgroupBuffer buf(4, 80);  // 20 per subgroup
    std::map<int, std::uint64_t> pushed;
    for (int op = 0; op < 5000; ++op) {
        if (rng.uniform() < 0.7) {
            const int j = static_cast<int>(rng.uniform_int(4));
            buf.push(make_transition(j, static_cast<double>(pushed[j]++)));
        } else if (buf.total_size() > 0) {
            const auto batches = buf.sample_per_subgroup(4, 1, rng);
            for (const auto& [j, batch] : batches)
                for (const auto* t : batch) CHECK(t->subgroup_id == j);
        }
        for (int j = 0; j < 4; ++j) {
            CHECK(buf.size(j) <= buf.capacity_per_subgroup());
            CHECK(buf.size(j) == std::min<std::uint64_t>(pushed[j], buf.capacity_per_subgroup()));
            const auto order = buf.in_insertion_order(j);
            for (size_t i = 0; i + 1 < order.size(); ++i)
                CHECK(order[i]->reward + 1.0 == order[i + 1]->reward);  // FIFO window
        }
    }
}
