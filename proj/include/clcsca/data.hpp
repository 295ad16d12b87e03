#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clcsca/geometry.hpp"
#include "clcsca/rng.hpp"

namespace clcsca {

enum class ShapeKind { sphere, cube, cylinder, torus };
enum class PartShapeKind { mug, lamp, table };

ShapeKind shape_kind_from_string(const std::string& s);
PartShapeKind part_shape_kind_from_string(const std::string& s);

// Uniform surface sample of a centro-symmetric primitive with Gaussian jitter
// and a random rotation about the up axis, normalized to centroid 0 and max
// radius 1. Points are emitted in antithetic pairs (p, -p), which makes the
// empirical centroid exactly zero; n_points must therefore be even (and >= 32).
PointCloud gen_shape(ShapeKind kind, std::size_t n_points, double noise_sigma, Rng& rng);

// Multi-part shape with exact per-point part labels (global label space shared
// by all categories). Point counts per part follow the parts' surface areas.
// Randomly rotated about the up axis, centered, normalized; n_points >= 32.
PointCloud gen_part_shape(PartShapeKind kind, std::size_t n_points, Rng& rng);

// Global part-label ids per category.
const std::map<std::string, std::vector<int>>& segmentation_part_sets();
std::size_t segmentation_num_parts();
const std::vector<std::string>& classification_class_names();
const std::vector<std::string>& segmentation_category_names();

// Analytic surface areas of a part shape's parts, in label order; used for
// point allocation and checked by the area-ratio tests.
std::vector<double> part_areas(PartShapeKind kind);

struct Dataset {
    std::string task;   // classification | segmentation
    std::string split;  // train | test
    std::vector<std::string> class_names;  // classes (cls) or categories (seg)
    std::map<std::string, std::vector<int>> part_sets;  // seg only
    std::vector<PointCloud> samples;

    // classification: class count; segmentation: global part count
    std::size_t num_classes() const;
    void validate() const;
};

struct DatasetPair {
    Dataset train, test;
};

// Class-balanced synthetic datasets; each cloud is generated from its own
// substream of seed (split/class/index), so splits never share a cloud and a
// class subset never changes the clouds of the classes that stay. `classes`
// picks a subset by name (empty = all classes of the task).
DatasetPair make_dataset(const std::string& task, std::size_t per_class_train,
                         std::size_t per_class_test, std::size_t n_points, double noise_sigma,
                         std::uint64_t seed, const std::vector<std::string>& classes = {});

// PCLD point-cloud file: float32 storage, little-endian, optional labels.
void save_cloud(const std::string& path, const PointCloud& pc);
PointCloud load_cloud(const std::string& path);

// Writes both splits as PCLD files plus manifest.json under dir.
void save_dataset(const std::string& dir, const DatasetPair& ds, std::uint64_t seed,
                  double noise_sigma);
DatasetPair load_dataset(const std::string& dir);

}  // namespace clcsca
