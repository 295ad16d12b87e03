#include "clcsca/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "clcsca/oracles.hpp"
#include "clcsca/rng.hpp"
#include "doctest.h"

using namespace clcsca;

namespace {

PointCloud cloud_from(std::vector<double> coords) {
    PointCloud pc;
    pc.n = coords.size() / 3;
    pc.coords = std::move(coords);
    return pc;
}

// Random cloud with a dose of exact duplicates, the adversarial case for
// canonical tie-breaking.
PointCloud random_cloud(Rng& rng, std::size_t n) {
    PointCloud pc;
    pc.n = n;
    pc.coords.resize(3 * n);
    for (double& c : pc.coords) c = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 1; i < n; ++i) {
        if (rng.uniform() < 0.2) {
            const std::size_t j = rng.below(i);
            std::copy(pc.coords.begin() + 3 * j, pc.coords.begin() + 3 * (j + 1),
                      pc.coords.begin() + 3 * i);
        }
    }
    return pc;
}

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    rng.shuffle(p);
    return p;
}

PointCloud permute(const PointCloud& pc, const std::vector<std::size_t>& perm) {
    PointCloud out;
    out.n = pc.n;
    out.coords.resize(3 * pc.n);
    for (std::size_t i = 0; i < pc.n; ++i)
        for (std::size_t d = 0; d < 3; ++d) out.coords[3 * i + d] = pc.coords[3 * perm[i] + d];
    return out;
}

std::multiset<std::vector<double>> coord_set(const PointCloud& pc,
                                             const std::vector<std::size_t>& idx) {
    std::multiset<std::vector<double>> s;
    for (std::size_t i : idx)
        s.insert({pc.coords[3 * i], pc.coords[3 * i + 1], pc.coords[3 * i + 2]});
    return s;
}

}  // namespace

TEST_CASE("point cloud validation catches malformed fields") {
    PointCloud pc = cloud_from({0, 0, 0, 1, 0, 0});
    CHECK_NOTHROW(pc.validate());

    PointCloud bad_coords = pc;
    bad_coords.coords.pop_back();
    CHECK_THROWS_AS(bad_coords.validate(), ContractError);

    PointCloud bad_attrs = pc;
    bad_attrs.a = 2;
    bad_attrs.attrs = {1.0};  // should be n*a = 4
    CHECK_THROWS_AS(bad_attrs.validate(), ContractError);

    PointCloud bad_labels = pc;
    bad_labels.point_labels = {0};  // size 1, n = 2
    CHECK_THROWS_AS(bad_labels.validate(), ContractError);
}

TEST_CASE("farthest point sampling on a hand-worked line") {
    // Seed = lexicographically smallest = index 0; the farthest point from it
    // is x=1 (index 3); the best third pick maximizes min distance: x=0.5.
    const PointCloud pc = cloud_from({0, 0, 0, 0.1, 0, 0, 0.5, 0, 0, 1, 0, 0});
    CHECK(farthest_point_sample(pc, 1) == std::vector<std::size_t>{0});
    CHECK(farthest_point_sample(pc, 2) == std::vector<std::size_t>{0, 3});
    CHECK(farthest_point_sample(pc, 3) == std::vector<std::size_t>{0, 3, 2});
    CHECK(farthest_point_sample(pc, 4) == std::vector<std::size_t>{0, 3, 2, 1});
}

TEST_CASE("farthest point sampling contract errors") {
    const PointCloud pc = cloud_from({0, 0, 0, 1, 0, 0});
    CHECK_THROWS_AS(farthest_point_sample(pc, 3), ContractError);
    CHECK_THROWS_AS(farthest_point_sample(pc, 0), ContractError);
    CHECK_THROWS_AS(farthest_point_sample_from(pc, 1, 5), ContractError);  // seed out of range
}

TEST_CASE("farthest point sampling matches the brute-force oracle") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(1000 + trial);
        const std::size_t n = 4 + rng.below(24);
        const PointCloud pc = random_cloud(rng, n);
        const std::size_t m = 1 + rng.below(n);
        CHECK(farthest_point_sample(pc, m) == oracle::fps_brute(pc, m));
    }
}

TEST_CASE("farthest point sampling selects the same coordinates under permutation") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(2000 + trial);
        const std::size_t n = 6 + rng.below(20);
        const PointCloud pc = random_cloud(rng, n);
        const PointCloud moved = permute(pc, random_perm(rng, n));
        const std::size_t m = 1 + rng.below(n);
        CHECK(coord_set(pc, farthest_point_sample(pc, m)) ==
              coord_set(moved, farthest_point_sample(moved, m)));
    }
}

TEST_CASE("ball query on a hand-worked line") {
    //      idx:   0        1          2          3
    const PointCloud pc = cloud_from({0, 0, 0, 0.3, 0, 0, 0.6, 0, 0, 2, 0, 0});
    const auto groups = ball_query(pc, {0, 3}, 0.7, 3);
    REQUIRE(groups.size() == 2);

    // Centroid 0: members within 0.7 are {0, 1, 2}, ascending distance.
    CHECK(groups[0].centroid_index == 0);
    CHECK(groups[0].member_indices == std::vector<std::size_t>{0, 1, 2});
    CHECK(groups[0].member_offsets[0] == 0.0);  // self at zero offset
    CHECK(groups[0].member_offsets[3] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(groups[0].member_offsets[6] == doctest::Approx(0.6).epsilon(1e-12));

    // Centroid 3 is isolated: only itself qualifies, padded to k by repetition.
    CHECK(groups[1].member_indices == std::vector<std::size_t>{3, 3, 3});
    for (double off : groups[1].member_offsets) CHECK(off == 0.0);
}

TEST_CASE("ball query truncates to the k nearest members") {
    const PointCloud pc = cloud_from({0, 0, 0, 0.1, 0, 0, 0.2, 0, 0, 0.3, 0, 0});
    const auto groups = ball_query(pc, {0}, 1.0, 2);
    CHECK(groups[0].member_indices == std::vector<std::size_t>{0, 1});
}

TEST_CASE("ball query matches the brute-force oracle") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(3000 + trial);
        const std::size_t n = 4 + rng.below(24);
        const PointCloud pc = random_cloud(rng, n);
        std::vector<std::size_t> centroids;
        for (std::size_t i = 0; i < n; ++i)
            if (rng.uniform() < 0.5) centroids.push_back(i);
        if (centroids.empty()) centroids.push_back(0);
        const double r = rng.uniform(0.2, 1.5);
        const std::size_t k = 1 + rng.below(6);

        const auto got = ball_query(pc, centroids, r, k);
        const auto want = oracle::ball_query_brute(pc, centroids, r, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].centroid_index == want[i].centroid_index);
            CHECK(got[i].member_indices == want[i].member_indices);
            REQUIRE(got[i].member_offsets.size() == want[i].member_offsets.size());
            for (std::size_t j = 0; j < got[i].member_offsets.size(); ++j) {
                CHECK(got[i].member_offsets[j] ==
                      doctest::Approx(want[i].member_offsets[j]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("knn on a hand-worked line") {
    const std::vector<double> source = {0, 0, 0, 1, 0, 0, 3, 0, 0};
    const std::vector<double> query = {0.9, 0, 0};
    const KnnResult r = knn(query, source, 2);
    CHECK(r.indices == std::vector<std::size_t>{1, 0});
    CHECK(r.distances[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.distances[1] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("knn requires enough source points") {
    const std::vector<double> source = {0, 0, 0};
    const std::vector<double> query = {1, 0, 0};
    CHECK_THROWS_AS(knn(query, source, 2), ContractError);
}

TEST_CASE("knn matches the brute-force oracle") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(4000 + trial);
        const std::size_t s = 3 + rng.below(20);
        const std::size_t q = 1 + rng.below(8);
        const PointCloud sc = random_cloud(rng, s);
        const PointCloud qc = random_cloud(rng, q);
        const std::size_t k = 1 + rng.below(s);

        const KnnResult got = knn(qc.coords, sc.coords, k);
        const KnnResult want = oracle::knn_brute(qc.coords.data(), q, sc.coords.data(), s, k);
        CHECK(got.indices == want.indices);
        REQUIRE(got.distances.size() == want.distances.size());
        for (std::size_t i = 0; i < got.distances.size(); ++i)
            CHECK(got.distances[i] == doctest::Approx(want.distances[i]).epsilon(1e-12));
    }
}

TEST_CASE("interpolation reproduces source features at coincident queries") {
    const std::vector<double> source = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    Tensor feats({3, 2}, {10, 20, 30, 40, 50, 60});
    // Query sits exactly on source point 1: its weight is 1/eps, which dwarfs
    // the others, so the result is that source row to ~1e-8 relative.
    Tensor out = interpolate_knn(feats, source, {1, 0, 0}, 3);
    CHECK(out.at(0, 0) == doctest::Approx(30).epsilon(1e-7));
    CHECK(out.at(0, 1) == doctest::Approx(40).epsilon(1e-7));
}

TEST_CASE("interpolation matches the brute-force oracle") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(5000 + trial);
        const std::size_t s = 3 + rng.below(12);
        const std::size_t q = 1 + rng.below(8);
        const std::size_t c = 1 + rng.below(5);
        const PointCloud sc = random_cloud(rng, s);
        const PointCloud qc = random_cloud(rng, q);
        std::vector<double> v(s * c);
        for (double& x : v) x = rng.uniform(-2.0, 2.0);
        Tensor feats({s, c}, std::move(v));
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(s, 4));

        const Tensor got = interpolate_knn(feats, sc.coords, qc.coords, k);
        const std::vector<double> want = oracle::interpolate_brute(feats, sc.coords, qc.coords, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(got.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("interpolation weights are convex") {
    // Constant features must interpolate to exactly that constant.
    const std::vector<double> source = {0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0};
    Tensor feats({4, 1}, {5.5, 5.5, 5.5, 5.5});
    Tensor out = interpolate_knn(feats, source, {0.3, 0.4, 0.2, -2, 3, 1}, 3);
    REQUIRE(out.rows() == 2);
    CHECK(out.at(0, 0) == doctest::Approx(5.5).epsilon(1e-12));
    CHECK(out.at(1, 0) == doctest::Approx(5.5).epsilon(1e-12));
}
