#include "clcsca/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

using namespace clcsca;

namespace {

double norm3(const double* p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

double rho(const double* p) { return std::sqrt(p[0] * p[0] + p[1] * p[1]); }

// Largest-remainder allocation, ties to the lower index; reference for the
// per-part point counts.
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t n) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<std::size_t> out(weights.size());
    std::vector<double> frac(weights.size());
    std::size_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = n * weights[i] / total;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        frac[i] = exact - std::floor(exact);
        used += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; used < n; ++i, ++used) out[order[i]] += 1;
    return out;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path("/tmp/clcsca_test_" + name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("shape names round-trip and reject strangers") {
    for (const std::string& s : classification_class_names())
        CHECK_NOTHROW(shape_kind_from_string(s));
    for (const std::string& s : segmentation_category_names())
        CHECK_NOTHROW(part_shape_kind_from_string(s));
    CHECK_THROWS_AS(shape_kind_from_string("pyramid"), ContractError);
    CHECK_THROWS_AS(part_shape_kind_from_string("sphere"), ContractError);
}

TEST_CASE("generated clouds are centered, unit-radius, antithetic") {
    for (ShapeKind kind : {ShapeKind::sphere, ShapeKind::cube, ShapeKind::cylinder,
                           ShapeKind::torus}) {
        Rng rng(17);
        const PointCloud pc = gen_shape(kind, 256, 0.02, rng);
        REQUIRE(pc.n == 256);

        double cx = 0, cy = 0, cz = 0, max_r = 0;
        for (std::size_t i = 0; i < pc.n; ++i) {
            cx += pc.coords[3 * i];
            cy += pc.coords[3 * i + 1];
            cz += pc.coords[3 * i + 2];
            max_r = std::max(max_r, norm3(pc.pt(i)));
        }
        CHECK(cx == 0.0);  // antithetic pairs cancel exactly
        CHECK(cy == 0.0);
        CHECK(cz == 0.0);
        CHECK(max_r == doctest::Approx(1.0).epsilon(1e-9));

        // Consecutive points are exact mirror pairs.
        for (std::size_t i = 0; i + 1 < pc.n; i += 2)
            for (std::size_t d = 0; d < 3; ++d)
                CHECK(pc.coords[3 * i + d] == -pc.coords[3 * (i + 1) + d]);
    }
}

TEST_CASE("cloud size contract: even and at least 32") {
    Rng rng(1);
    CHECK_THROWS_AS(gen_shape(ShapeKind::sphere, 30, 0.0, rng), ContractError);
    CHECK_THROWS_AS(gen_shape(ShapeKind::sphere, 33, 0.0, rng), ContractError);
    CHECK_THROWS_AS(gen_part_shape(PartShapeKind::mug, 16, rng), ContractError);
}

TEST_CASE("noiseless sphere points all sit on one radius") {
    Rng rng(19);
    const PointCloud pc = gen_shape(ShapeKind::sphere, 512, 0.0, rng);
    for (std::size_t i = 0; i < pc.n; ++i)
        CHECK(norm3(pc.pt(i)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("noiseless cylinder splits into caps and a lateral sheet") {
    Rng rng(23);
    const PointCloud pc = gen_shape(ShapeKind::cylinder, 512, 0.0, rng);
    // Cap points keep |z| = half-height exactly (z survives the z-rotation), so
    // the sample maximum recovers the normalization scale.
    double s = 0.0;
    for (std::size_t i = 0; i < pc.n; ++i) s = std::max(s, std::abs(pc.pt(i)[2]));
    std::size_t caps = 0;
    for (std::size_t i = 0; i < pc.n; ++i) {
        const double z = std::abs(pc.pt(i)[2]), r = rho(pc.pt(i));
        const bool on_cap = z >= s * (1.0 - 1e-9);
        const bool on_side = std::abs(r / s - 0.6) <= 1e-9;
        CHECK((on_cap || on_side));
        if (on_cap) {
            CHECK(r <= 0.6 * s * (1 + 1e-9));
            ++caps;
        }
        CHECK(z <= s * (1 + 1e-12));
    }
    // Caps carry area fraction 2*pi*R^2 / (2*pi*R^2 + 2*pi*R*h) = 0.23.
    CHECK(caps > 60);
    CHECK(caps < 180);
}

TEST_CASE("noiseless cube respects face geometry under z-rotation") {
    Rng rng(29);
    const PointCloud pc = gen_shape(ShapeKind::cube, 512, 0.0, rng);
    double s = 0.0;  // top/bottom faces keep |z| = half-extent exactly
    for (std::size_t i = 0; i < pc.n; ++i) s = std::max(s, std::abs(pc.pt(i)[2]));
    for (std::size_t i = 0; i < pc.n; ++i) {
        const double z = std::abs(pc.pt(i)[2]), r = rho(pc.pt(i));
        CHECK(z <= s * (1 + 1e-12));
        CHECK(r <= s * std::sqrt(2.0) * (1 + 1e-9));
        // A point below the top plane must lie on a side face: axial radius in
        // [half-extent, half-extent * sqrt(2)] regardless of the rotation.
        if (z < s * (1.0 - 1e-9)) CHECK(r >= s * (1.0 - 1e-9));
    }
}

TEST_CASE("noiseless torus fits its defining circle") {
    Rng rng(31);
    const PointCloud pc = gen_shape(ShapeKind::torus, 512, 0.0, rng);
    // (rho - c)^2 + z^2 = a^2 is linear in (2c, a^2 - c^2) against rho^2 + z^2;
    // solve the 2x2 normal equations and demand tiny residuals and c/a = 3
    // (major/minor = 0.75/0.25), both invariant to the normalization scale.
    double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
    for (std::size_t i = 0; i < pc.n; ++i) {
        const double r = rho(pc.pt(i)), z = pc.pt(i)[2];
        const double target = r * r + z * z;
        s11 += r * r;
        s12 += r;
        s22 += 1;
        t1 += r * target;
        t2 += target;
    }
    const double det = s11 * s22 - s12 * s12;
    const double twoc = (t1 * s22 - t2 * s12) / det;
    const double rest = (s11 * t2 - s12 * t1) / det;  // a^2 - c^2
    const double c = twoc / 2.0;
    const double a = std::sqrt(rest + c * c);
    CHECK(c / a == doctest::Approx(3.0).epsilon(1e-6));
    for (std::size_t i = 0; i < pc.n; ++i) {
        const double r = rho(pc.pt(i)), z = pc.pt(i)[2];
        const double resid = (r - c) * (r - c) + z * z - a * a;
        CHECK(std::abs(resid) < 1e-9);
    }
}

TEST_CASE("noise actually perturbs the surface") {
    Rng rng(37);
    const PointCloud pc = gen_shape(ShapeKind::sphere, 256, 0.05, rng);
    std::size_t off_surface = 0;
    for (std::size_t i = 0; i < pc.n; ++i)
        if (std::abs(norm3(pc.pt(i)) - 1.0) > 1e-6) ++off_surface;
    CHECK(off_surface > 200);
}

TEST_CASE("part shapes allocate points by surface area") {
    for (PartShapeKind kind : {PartShapeKind::mug, PartShapeKind::lamp, PartShapeKind::table}) {
        const std::vector<double> areas = part_areas(kind);
        REQUIRE(!areas.empty());
        for (double a : areas) CHECK(a > 0.0);

        Rng rng(41);
        const std::size_t n = 400;
        const PointCloud pc = gen_part_shape(kind, n, rng);
        REQUIRE(pc.point_labels.size() == n);

        // Count per global label, in the order parts were defined.
        std::vector<int> labels;
        for (int l : pc.point_labels)
            if (labels.empty() || labels.back() != l) labels.push_back(l);
        REQUIRE(labels.size() == areas.size());  // emitted part-by-part
        std::vector<std::size_t> counts(areas.size(), 0);
        for (std::size_t i = 0, part = 0; i < n; ++i) {
            if (pc.point_labels[i] != labels[part]) ++part;
            ++counts[part];
        }
        CHECK(counts == largest_remainder(areas, n));
    }
}

TEST_CASE("part labels live in the category's global part set") {
    const auto& sets = segmentation_part_sets();
    REQUIRE(sets.size() == segmentation_category_names().size());
    std::set<int> all;
    for (const auto& [cat, parts] : sets)
        for (int p : parts) CHECK(all.insert(p).second);  // sets are disjoint
    CHECK(all.size() == segmentation_num_parts());
    CHECK(*all.rbegin() == static_cast<int>(segmentation_num_parts()) - 1);

    Rng rng(43);
    for (const std::string& cat : segmentation_category_names()) {
        const PointCloud pc = gen_part_shape(part_shape_kind_from_string(cat), 128, rng);
        const auto& parts = sets.at(cat);
        for (int l : pc.point_labels)
            CHECK(std::find(parts.begin(), parts.end(), l) != parts.end());
    }
}

TEST_CASE("datasets are class-balanced with stable per-class streams") {
    const DatasetPair full = make_dataset("classification", 3, 2, 32, 0.01, 7);
    CHECK(full.train.samples.size() == 4 * 3);
    CHECK(full.test.samples.size() == 4 * 2);
    CHECK(full.train.num_classes() == 4);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(*full.train.samples[c * 3 + i].cloud_label == static_cast<int>(c));

    // A class subset reproduces the surviving classes' clouds bit-exactly.
    const DatasetPair sub =
        make_dataset("classification", 3, 2, 32, 0.01, 7, {"cylinder", "torus"});
    CHECK(sub.train.samples.size() == 2 * 3);
    CHECK(sub.train.class_names == std::vector<std::string>{"cylinder", "torus"});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(sub.train.samples[0 * 3 + i].coords == full.train.samples[2 * 3 + i].coords);
        CHECK(sub.train.samples[1 * 3 + i].coords == full.train.samples[3 * 3 + i].coords);
    }

    // Splits never share a cloud.
    for (const PointCloud& tr : full.train.samples)
        for (const PointCloud& te : full.test.samples) CHECK(tr.coords != te.coords);

    CHECK_THROWS_AS(make_dataset("classification", 1, 1, 32, 0.0, 0, {"sphere", "sphere"}),
                    ContractError);
    CHECK_THROWS_AS(make_dataset("classification", 1, 1, 32, 0.0, 0, {"mug"}), ContractError);
    CHECK_THROWS_AS(make_dataset("pose", 1, 1, 32, 0.0, 0), ContractError);
}

TEST_CASE("segmentation datasets carry part sets and validate labels") {
    const DatasetPair ds = make_dataset("segmentation", 2, 1, 64, 0.0, 3);
    CHECK(ds.train.num_classes() == segmentation_num_parts());
    CHECK(ds.train.part_sets.size() == 3);
    for (const PointCloud& pc : ds.train.samples) {
        REQUIRE(pc.point_labels.size() == pc.n);
        REQUIRE(pc.cloud_label.has_value());
    }
    CHECK_NOTHROW(ds.train.validate());

    Dataset broken = ds.train;
    broken.samples[0].point_labels[0] = 99;
    CHECK_THROWS_AS(broken.validate(), ContractError);
}

TEST_CASE("pcld round-trip preserves a cloud at float precision") {
    Rng rng(47);
    PointCloud pc = gen_part_shape(PartShapeKind::lamp, 64, rng);
    pc.cloud_label = 1;
    TempDir dir("pcld");
    const std::string path = (dir.path / "cloud.pcld").string();
    save_cloud(path, pc);

    const PointCloud back = load_cloud(path);
    CHECK(back.n == pc.n);
    CHECK(back.a == pc.a);
    CHECK(back.point_labels == pc.point_labels);
    CHECK(back.cloud_label == pc.cloud_label);
    for (std::size_t i = 0; i < pc.coords.size(); ++i)
        CHECK(back.coords[i] == static_cast<double>(static_cast<float>(pc.coords[i])));

    // Saving the loaded cloud reproduces the file byte for byte.
    const std::string again = (dir.path / "again.pcld").string();
    save_cloud(again, back);
    CHECK(slurp(path) == slurp(again));
}

TEST_CASE("pcld rejects out-of-range labels at save time") {
    Rng rng(53);
    PointCloud pc = gen_shape(ShapeKind::cube, 32, 0.0, rng);
    pc.cloud_label = -1;
    TempDir dir("pcld_neg");
    CHECK_THROWS_AS(save_cloud((dir.path / "x.pcld").string(), pc), ContractError);
    pc.cloud_label = 100000;  // beyond u16
    CHECK_THROWS_AS(save_cloud((dir.path / "x.pcld").string(), pc), ContractError);
}

TEST_CASE("pcld load errors are file-format errors with positions") {
    Rng rng(59);
    PointCloud pc = gen_shape(ShapeKind::sphere, 32, 0.0, rng);
    TempDir dir("pcld_err");
    const std::string good = (dir.path / "good.pcld").string();
    save_cloud(good, pc);
    const std::string bytes = slurp(good);

    auto write = [&](const std::string& name, const std::string& content) {
        const std::string p = (dir.path / name).string();
        std::ofstream(p, std::ios::binary) << content;
        return p;
    };

    // Truncated payload names the failing byte position.
    try {
        load_cloud(write("cut.pcld", bytes.substr(0, 40)));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(" at byte ") != std::string::npos);
    }

    std::string magic = bytes;
    magic[0] = 'Q';
    CHECK_THROWS_AS(load_cloud(write("magic.pcld", magic)), FormatError);

    std::string version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(load_cloud(write("version.pcld", version)), FormatError);

    std::string flags = bytes;
    flags[16] = static_cast<char>(0x80);  // unknown flag bit
    CHECK_THROWS_AS(load_cloud(write("flags.pcld", flags)), FormatError);

    CHECK_THROWS_AS(load_cloud(write("extra.pcld", bytes + "tail")), FormatError);
    CHECK_THROWS_AS(load_cloud((dir.path / "missing.pcld").string()), FormatError);
}

TEST_CASE("dataset save/load round-trips files and manifest") {
    const DatasetPair ds = make_dataset("segmentation", 2, 1, 64, 0.0, 11);
    TempDir dir("dataset");
    save_dataset(dir.path.string(), ds, 11, 0.0);
    CHECK(std::filesystem::exists(dir.path / "manifest.json"));

    const DatasetPair back = load_dataset(dir.path.string());
    CHECK(back.train.task == "segmentation");
    CHECK(back.train.class_names == ds.train.class_names);
    CHECK(back.train.part_sets == ds.train.part_sets);
    REQUIRE(back.train.samples.size() == ds.train.samples.size());
    REQUIRE(back.test.samples.size() == ds.test.samples.size());
    for (std::size_t i = 0; i < back.train.samples.size(); ++i) {
        const PointCloud& a = back.train.samples[i];
        const PointCloud& b = ds.train.samples[i];
        CHECK(a.point_labels == b.point_labels);
        CHECK(a.cloud_label == b.cloud_label);
        for (std::size_t j = 0; j < a.coords.size(); ++j)
            CHECK(a.coords[j] == static_cast<double>(static_cast<float>(b.coords[j])));
    }

    CHECK_THROWS_AS(load_dataset((dir.path / "nowhere").string()), FormatError);
}
