#include "clcsca/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace clcsca {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;

using Point = std::array<double, 3>;

// ---- primitive surface samplers (unit-ish extents, centro-symmetric) --------

Point sample_sphere(Rng& rng) {
    // normalized gaussian triple; retry the (measure-zero) degenerate draw
    for (;;) {
        const double x = rng.normal(), y = rng.normal(), z = rng.normal();
        const double n = std::sqrt(x * x + y * y + z * z);
        if (n > 1e-12) return {x / n, y / n, z / n};
    }
}

Point sample_cube(Rng& rng) {
    const std::uint64_t face = rng.below(6);
    const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
    const double s = face % 2 == 0 ? 1.0 : -1.0;
    switch (face / 2) {
        case 0: return {s, u, v};
        case 1: return {u, s, v};
        default: return {u, v, s};
    }
}

Point sample_cylinder(Rng& rng) {
    constexpr double r = 0.6, h = 1.0;  // z in [-h, h]
    constexpr double lateral = 2.0 * kPi * r * 2.0 * h;
    constexpr double caps = 2.0 * kPi * r * r;
    if (rng.uniform() < lateral / (lateral + caps)) {
        const double theta = rng.uniform(0.0, 2.0 * kPi);
        return {r * std::cos(theta), r * std::sin(theta), rng.uniform(-h, h)};
    }
    const double s = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double rho = r * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return {rho * std::cos(phi), rho * std::sin(phi), s * h};
}

Point sample_torus(Rng& rng) {
    constexpr double rmaj = 0.75, rmin = 0.25;
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    double phi;
    // area element is proportional to rmaj + rmin*cos(phi)
    for (;;) {
        phi = rng.uniform(0.0, 2.0 * kPi);
        if (rng.uniform() * (rmaj + rmin) <= rmaj + rmin * std::cos(phi)) break;
    }
    const double ring = rmaj + rmin * std::cos(phi);
    return {ring * std::cos(theta), ring * std::sin(theta), rmin * std::sin(phi)};
}

Point sample_primitive(ShapeKind kind, Rng& rng) {
    switch (kind) {
        case ShapeKind::sphere: return sample_sphere(rng);
        case ShapeKind::cube: return sample_cube(rng);
        case ShapeKind::cylinder: return sample_cylinder(rng);
        default: return sample_torus(rng);
    }
}

// ---- shared post-processing --------------------------------------------------

void rotate_about_z(std::vector<double>& coords, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t i = 0; i < coords.size(); i += 3) {
        const double x = coords[i], y = coords[i + 1];
        coords[i] = c * x - s * y;
        coords[i + 1] = s * x + c * y;
    }
}

void center_and_normalize(std::vector<double>& coords) {
    const std::size_t n = coords.size() / 3;
    double cx = 0, cy = 0, cz = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cx += coords[3 * i];
        cy += coords[3 * i + 1];
        cz += coords[3 * i + 2];
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    cz /= static_cast<double>(n);
    double max_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        coords[3 * i] -= cx;
        coords[3 * i + 1] -= cy;
        coords[3 * i + 2] -= cz;
        const double r = std::sqrt(coords[3 * i] * coords[3 * i] +
                                   coords[3 * i + 1] * coords[3 * i + 1] +
                                   coords[3 * i + 2] * coords[3 * i + 2]);
        max_r = std::max(max_r, r);
    }
    const double inv = 1.0 / max_r;
    for (double& c : coords) c *= inv;
}

}  // namespace

ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "sphere") return ShapeKind::sphere;
    if (s == "cube") return ShapeKind::cube;
    if (s == "cylinder") return ShapeKind::cylinder;
    if (s == "torus") return ShapeKind::torus;
    throw ContractError("shape kind: expected sphere|cube|cylinder|torus, got \"" + s + "\"");
}

PartShapeKind part_shape_kind_from_string(const std::string& s) {
    if (s == "mug") return PartShapeKind::mug;
    if (s == "lamp") return PartShapeKind::lamp;
    if (s == "table") return PartShapeKind::table;
    throw ContractError("part shape kind: expected mug|lamp|table, got \"" + s + "\"");
}

PointCloud gen_shape(ShapeKind kind, std::size_t n_points, double noise_sigma, Rng& rng) {
    if (n_points < 32) throw ContractError("gen_shape: need at least 32 points");
    if (n_points % 2 != 0) {
        // antithetic pairing (exact zero centroid) needs an even count
        throw ContractError("gen_shape: point count must be even");
    }
    PointCloud pc;
    pc.n = n_points;
    pc.coords.reserve(3 * n_points);
    for (std::size_t i = 0; i < n_points / 2; ++i) {
        Point p = sample_primitive(kind, rng);
        if (noise_sigma > 0.0) {
            for (double& c : p) c += noise_sigma * rng.normal();
        }
        pc.coords.insert(pc.coords.end(), {p[0], p[1], p[2]});
        pc.coords.insert(pc.coords.end(), {-p[0], -p[1], -p[2]});
    }
    rotate_about_z(pc.coords, rng.uniform(0.0, 2.0 * kPi));
    center_and_normalize(pc.coords);
    pc.validate();
    return pc;
}

// ---- part shapes ---------------------------------------------------------------

namespace {

// mug: cylindrical body (shell + bottom) and a half-torus handle
constexpr double kMugR = 0.5, kMugH = 0.6;                      // body, z in [-h, h]
constexpr double kHandleCx = 0.55, kHandleMaj = 0.35, kHandleMin = 0.08;
// lamp: base disc, thin pole, cone-frustum shade
constexpr double kBaseR = 0.4, kBaseZ = -1.0;
constexpr double kPoleR = 0.05, kPoleZ0 = -1.0, kPoleZ1 = 0.4;
constexpr double kShadeZ0 = 0.4, kShadeZ1 = 1.0, kShadeR0 = 0.45, kShadeR1 = 0.15;
// table: box top on four square posts
constexpr double kTopX = 0.8, kTopY = 0.5, kTopZ0 = 0.5, kTopZ1 = 0.62;  // half-extents x/y
constexpr double kLegHalf = 0.05, kLegZ0 = -1.0, kLegZ1 = 0.5;
constexpr double kLegPx = 0.65, kLegPy = 0.35;

double frustum_slant() {
    const double dz = kShadeZ1 - kShadeZ0, dr = kShadeR0 - kShadeR1;
    return std::sqrt(dz * dz + dr * dr);
}

Point sample_box(double hx, double hy, double z0, double z1, double cx, double cy, Rng& rng) {
    const double hz = (z1 - z0) / 2.0, cz = (z0 + z1) / 2.0;
    const double ax = 2 * hy * 2 * hz, ay = 2 * hx * 2 * hz, az = 2 * hx * 2 * hy;
    const double pick = rng.uniform() * (2 * ax + 2 * ay + 2 * az);
    const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
    double x, y, z;
    if (pick < 2 * ax) {
        x = pick < ax ? hx : -hx;
        y = u * hy;
        z = v * hz;
    } else if (pick < 2 * ax + 2 * ay) {
        y = pick < 2 * ax + ay ? hy : -hy;
        x = u * hx;
        z = v * hz;
    } else {
        z = pick < 2 * ax + 2 * ay + az ? hz : -hz;
        x = u * hx;
        y = v * hy;
    }
    return {cx + x, cy + y, cz + z};
}

Point sample_mug_body(Rng& rng) {
    const double lateral = 2.0 * kPi * kMugR * 2.0 * kMugH;
    const double bottom = kPi * kMugR * kMugR;
    if (rng.uniform() < lateral / (lateral + bottom)) {
        const double theta = rng.uniform(0.0, 2.0 * kPi);
        return {kMugR * std::cos(theta), kMugR * std::sin(theta), rng.uniform(-kMugH, kMugH)};
    }
    const double rho = kMugR * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return {rho * std::cos(phi), rho * std::sin(phi), -kMugH};
}

Point sample_mug_handle(Rng& rng) {
    // half torus in the x-z plane, bulging toward +x
    const double psi = rng.uniform(-kPi / 2.0, kPi / 2.0);
    double phi;
    for (;;) {
        phi = rng.uniform(0.0, 2.0 * kPi);
        if (rng.uniform() * (kHandleMaj + kHandleMin) <= kHandleMaj + kHandleMin * std::cos(phi)) break;
    }
    const double ring = kHandleMaj + kHandleMin * std::cos(phi);
    return {kHandleCx + ring * std::cos(psi), kHandleMin * std::sin(phi), ring * std::sin(psi)};
}

Point sample_lamp_base(Rng& rng) {
    const double rho = kBaseR * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return {rho * std::cos(phi), rho * std::sin(phi), kBaseZ};
}

Point sample_lamp_pole(Rng& rng) {
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    return {kPoleR * std::cos(theta), kPoleR * std::sin(theta), rng.uniform(kPoleZ0, kPoleZ1)};
}

Point sample_lamp_shade(Rng& rng) {
    double t;
    // area element along the frustum is proportional to the local radius
    for (;;) {
        t = rng.uniform();
        const double r = kShadeR0 + (kShadeR1 - kShadeR0) * t;
        if (rng.uniform() * std::max(kShadeR0, kShadeR1) <= r) break;
    }
    const double r = kShadeR0 + (kShadeR1 - kShadeR0) * t;
    const double z = kShadeZ0 + (kShadeZ1 - kShadeZ0) * t;
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return {r * std::cos(phi), r * std::sin(phi), z};
}

Point sample_table_top(Rng& rng) {
    return sample_box(kTopX, kTopY, kTopZ0, kTopZ1, 0.0, 0.0, rng);
}

Point sample_table_leg(Rng& rng) {
    const std::uint64_t which = rng.below(4);
    const double cx = (which & 1) ? kLegPx : -kLegPx;
    const double cy = (which & 2) ? kLegPy : -kLegPy;
    return sample_box(kLegHalf, kLegHalf, kLegZ0, kLegZ1, cx, cy, rng);
}

struct PartDef {
    int label;
    double area;
    Point (*sample)(Rng&);
};

std::vector<PartDef> part_defs(PartShapeKind kind) {
    switch (kind) {
        case PartShapeKind::mug: {
            const double body = 2.0 * kPi * kMugR * 2.0 * kMugH + kPi * kMugR * kMugR;
            const double handle = kPi * kHandleMaj * 2.0 * kPi * kHandleMin;  // half ring
            return {{0, body, sample_mug_body}, {1, handle, sample_mug_handle}};
        }
        case PartShapeKind::lamp: {
            const double base = kPi * kBaseR * kBaseR;
            const double pole = 2.0 * kPi * kPoleR * (kPoleZ1 - kPoleZ0);
            const double shade = kPi * (kShadeR0 + kShadeR1) * frustum_slant();
            return {{2, base, sample_lamp_base}, {3, pole, sample_lamp_pole},
                    {4, shade, sample_lamp_shade}};
        }
        default: {
            const double top = 2.0 * (2 * kTopX * 2 * kTopY) +
                               2.0 * (2 * kTopX * (kTopZ1 - kTopZ0)) +
                               2.0 * (2 * kTopY * (kTopZ1 - kTopZ0));
            const double one_leg = 4.0 * (2 * kLegHalf) * (kLegZ1 - kLegZ0) +
                                   2.0 * (2 * kLegHalf) * (2 * kLegHalf);
            return {{5, top, sample_table_top}, {6, 4.0 * one_leg, sample_table_leg}};
        }
    }
}

// Largest-remainder allocation of n points across parts by area.
std::vector<std::size_t> allocate_points(const std::vector<double>& areas, std::size_t n) {
    const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
    std::vector<std::size_t> counts(areas.size());
    std::vector<std::pair<double, std::size_t>> rema(areas.size());
    std::size_t given = 0;
    for (std::size_t i = 0; i < areas.size(); ++i) {
        const double exact = static_cast<double>(n) * areas[i] / total;
        counts[i] = static_cast<std::size_t>(exact);
        rema[i] = {exact - static_cast<double>(counts[i]), i};
        given += counts[i];
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t j = 0; given < n; ++j, ++given) counts[rema[j % rema.size()].second] += 1;
    return counts;
}

}  // namespace

std::vector<double> part_areas(PartShapeKind kind) {
    std::vector<double> areas;
    for (const PartDef& d : part_defs(kind)) areas.push_back(d.area);
    return areas;
}

PointCloud gen_part_shape(PartShapeKind kind, std::size_t n_points, Rng& rng) {
    if (n_points < 32) throw ContractError("gen_part_shape: need at least 32 points");
    const auto defs = part_defs(kind);
    std::vector<double> areas;
    for (const PartDef& d : defs) areas.push_back(d.area);
    const auto counts = allocate_points(areas, n_points);
    PointCloud pc;
    pc.n = n_points;
    pc.coords.reserve(3 * n_points);
    pc.point_labels.reserve(n_points);
    for (std::size_t part = 0; part < defs.size(); ++part) {
        for (std::size_t i = 0; i < counts[part]; ++i) {
            const Point p = defs[part].sample(rng);
            pc.coords.insert(pc.coords.end(), {p[0], p[1], p[2]});
            pc.point_labels.push_back(defs[part].label);
        }
    }
    rotate_about_z(pc.coords, rng.uniform(0.0, 2.0 * kPi));
    center_and_normalize(pc.coords);
    pc.validate();
    return pc;
}

// ---- dataset ---------------------------------------------------------------------

const std::vector<std::string>& classification_class_names() {
    static const std::vector<std::string> names = {"sphere", "cube", "cylinder", "torus"};
    return names;
}

const std::vector<std::string>& segmentation_category_names() {
    static const std::vector<std::string> names = {"mug", "lamp", "table"};
    return names;
}

const std::map<std::string, std::vector<int>>& segmentation_part_sets() {
    static const std::map<std::string, std::vector<int>> sets = {
        {"mug", {0, 1}}, {"lamp", {2, 3, 4}}, {"table", {5, 6}}};
    return sets;
}

std::size_t segmentation_num_parts() { return 7; }

std::size_t Dataset::num_classes() const {
    if (task == "segmentation") {
        std::size_t top = 0;
        for (const auto& [_, parts] : part_sets) {
            for (int p : parts) top = std::max(top, static_cast<std::size_t>(p) + 1);
        }
        return top;
    }
    return class_names.size();
}

void Dataset::validate() const {
    if (task != "classification" && task != "segmentation") {
        throw ContractError("dataset: bad task \"" + task + "\"");
    }
    for (const PointCloud& pc : samples) {
        pc.validate();
        if (!pc.cloud_label || *pc.cloud_label < 0 ||
            static_cast<std::size_t>(*pc.cloud_label) >= class_names.size()) {
            throw ContractError("dataset: sample with out-of-range class label");
        }
        if (task == "segmentation") {
            const auto& parts = part_sets.at(class_names[*pc.cloud_label]);
            if (pc.point_labels.size() != pc.n) {
                throw ContractError("dataset: segmentation sample without point labels");
            }
            for (int l : pc.point_labels) {
                if (std::find(parts.begin(), parts.end(), l) == parts.end()) {
                    throw ContractError("dataset: point label " + std::to_string(l) +
                                        " outside its category's part set");
                }
            }
        }
    }
}

DatasetPair make_dataset(const std::string& task, std::size_t per_class_train,
                         std::size_t per_class_test, std::size_t n_points, double noise_sigma,
                         std::uint64_t seed, const std::vector<std::string>& classes) {
    if (task != "classification" && task != "segmentation") {
        throw ContractError("make_dataset: task must be classification or segmentation");
    }
    const bool cls = task == "classification";
    std::vector<std::string> names =
        classes.empty() ? (cls ? classification_class_names() : segmentation_category_names())
                        : classes;
    for (const std::string& name : names) {
        // validates membership in the task's class list
        if (cls) {
            shape_kind_from_string(name);
        } else {
            part_shape_kind_from_string(name);
        }
    }
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size()) {
        throw ContractError("make_dataset: duplicate class name");
    }
    DatasetPair out;
    for (Dataset* ds : {&out.train, &out.test}) {
        const bool is_train = ds == &out.train;
        ds->task = task;
        ds->split = is_train ? "train" : "test";
        ds->class_names = names;
        if (!cls) {
            for (const std::string& name : names) ds->part_sets[name] = segmentation_part_sets().at(name);
        }
        const std::size_t per_class = is_train ? per_class_train : per_class_test;
        for (std::size_t c = 0; c < names.size(); ++c) {
            for (std::size_t i = 0; i < per_class; ++i) {
                Rng rng = Rng::stream(
                    seed, std::vector<std::string>{"data", ds->split, names[c], std::to_string(i)});
                PointCloud pc = cls
                                    ? gen_shape(shape_kind_from_string(names[c]), n_points,
                                                noise_sigma, rng)
                                    : gen_part_shape(part_shape_kind_from_string(names[c]), n_points,
                                                     rng);
                pc.cloud_label = static_cast<int>(c);
                ds->samples.push_back(std::move(pc));
            }
        }
        ds->validate();
    }
    return out;
}

// ---- PCLD files -------------------------------------------------------------------

namespace {

constexpr char kPcldMagic[4] = {'P', 'C', 'L', 'D'};
constexpr std::uint32_t kPcldVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double d) {
    const float f = static_cast<float>(d);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32(out, bits);
}

struct PcldReader {
    const std::string& buf;
    std::size_t off = 0;

    void need(std::size_t n, const char* what) {
        if (off + n > buf.size()) {
            throw FormatError(std::string("point cloud file: truncated reading ") + what, off);
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto lo = static_cast<unsigned char>(buf[off]);
        const auto hi = static_cast<unsigned char>(buf[off + 1]);
        off += 2;
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
        off += 8;
        return v;
    }
    double f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        return static_cast<double>(f);
    }
};

}  // namespace

void save_cloud(const std::string& path, const PointCloud& pc) {
    pc.validate();
    for (int l : pc.point_labels) {
        if (l < 0 || l > 0xffff) throw ContractError("save_cloud: label outside u16 range");
    }
    if (pc.cloud_label && (*pc.cloud_label < 0 || *pc.cloud_label > 0xffff)) {
        throw ContractError("save_cloud: cloud label outside u16 range");
    }
    std::string buf;
    buf.append(kPcldMagic, 4);
    put_u32(buf, kPcldVersion);
    put_u64(buf, pc.n);
    put_u32(buf, static_cast<std::uint32_t>(pc.a));
    std::uint32_t flags = 0;
    if (!pc.point_labels.empty()) flags |= 1u;
    if (pc.cloud_label) flags |= 2u;
    put_u32(buf, flags);
    for (double c : pc.coords) put_f32(buf, c);
    for (double v : pc.attrs) put_f32(buf, v);
    for (int l : pc.point_labels) put_u16(buf, static_cast<std::uint16_t>(l));
    if (pc.cloud_label) put_u16(buf, static_cast<std::uint16_t>(*pc.cloud_label));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open \"" + path + "\" for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for \"" + path + "\"");
}

PointCloud load_cloud(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\" for reading");
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    PcldReader r{buf};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kPcldMagic, 4) != 0) {
        throw FormatError("point cloud file: bad magic", 0);
    }
    r.off = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kPcldVersion) {
        throw FormatError("point cloud file: unsupported version " + std::to_string(version), 4);
    }
    PointCloud pc;
    pc.n = static_cast<std::size_t>(r.u64("point count"));
    pc.a = r.u32("attribute count");
    if (pc.n == 0 || pc.n > (1u << 24) || pc.a > 4096) {
        throw FormatError("point cloud file: implausible header", 8);
    }
    const std::uint32_t flags = r.u32("flags");
    if ((flags & ~3u) != 0) throw FormatError("point cloud file: unknown flags", r.off - 4);
    pc.coords.resize(3 * pc.n);
    for (double& c : pc.coords) c = r.f32("coordinates");
    pc.attrs.resize(pc.a * pc.n);
    for (double& v : pc.attrs) v = r.f32("attributes");
    if (flags & 1u) {
        pc.point_labels.resize(pc.n);
        for (int& l : pc.point_labels) l = r.u16("point labels");
    }
    if (flags & 2u) pc.cloud_label = r.u16("cloud label");
    if (r.off != buf.size()) throw FormatError("point cloud file: trailing bytes", r.off);
    pc.validate();
    return pc;
}

// ---- dataset directory --------------------------------------------------------------

void save_dataset(const std::string& dir, const DatasetPair& ds, std::uint64_t seed,
                  double noise_sigma) {
    ds.train.validate();
    ds.test.validate();
    fs::create_directories(fs::path(dir) / "train");
    fs::create_directories(fs::path(dir) / "test");
    json manifest{{"format", "clcsca-dataset"},
                  {"version", 1},
                  {"task", ds.train.task},
                  {"classes", ds.train.class_names},
                  {"points", ds.train.samples.empty() ? 0 : ds.train.samples.front().n},
                  {"noise", noise_sigma},
                  {"seed", seed}};
    if (ds.train.task == "segmentation") {
        json parts;
        for (const auto& [cat, ids] : ds.train.part_sets) parts[cat] = ids;
        manifest["part_sets"] = parts;
    }
    json splits;
    for (const Dataset* d : {&ds.train, &ds.test}) {
        json files = json::array();
        std::map<int, std::size_t> counters;
        for (const PointCloud& pc : d->samples) {
            const int c = *pc.cloud_label;
            char name[128];
            std::snprintf(name, sizeof(name), "%s/%s_%04zu.pcld", d->split.c_str(),
                          d->class_names[c].c_str(), counters[c]++);
            save_cloud((fs::path(dir) / name).string(), pc);
            files.push_back(name);
        }
        splits[d->split] = files;
    }
    manifest["splits"] = splits;
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw FormatError("cannot write dataset manifest in \"" + dir + "\"");
    out << manifest.dump(2) << "\n";
}

DatasetPair load_dataset(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw FormatError("cannot open dataset manifest in \"" + dir + "\"");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset manifest: ") + e.what());
    }
    try {
        if (manifest.at("format").get<std::string>() != "clcsca-dataset" ||
            manifest.at("version").get<int>() != 1) {
            throw FormatError("dataset manifest: unrecognized format/version");
        }
        DatasetPair out;
        for (Dataset* d : {&out.train, &out.test}) {
            d->task = manifest.at("task").get<std::string>();
            d->split = d == &out.train ? "train" : "test";
            d->class_names = manifest.at("classes").get<std::vector<std::string>>();
            if (d->task == "segmentation") {
                for (const auto& [cat, ids] : manifest.at("part_sets").items()) {
                    d->part_sets[cat] = ids.get<std::vector<int>>();
                }
            }
            for (const auto& rel : manifest.at("splits").at(d->split)) {
                d->samples.push_back(load_cloud((fs::path(dir) / rel.get<std::string>()).string()));
            }
            d->validate();
        }
        return out;
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset manifest: ") + e.what());
    }
}

}  // namespace clcsca
