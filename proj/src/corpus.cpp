#include "aerogen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;

namespace aerogen {

void SceneConfig::validate() const {
    if (n_categories < 2) throw std::invalid_argument("SceneConfig: need >= 2 categories");
    if (min_objects < 1 || max_objects < min_objects) {
        throw std::invalid_argument("SceneConfig: bad object count range");
    }
    if (!(min_size > 0) || max_size < min_size) {
        throw std::invalid_argument("SceneConfig: bad size range");
    }
    if (!category_weights.empty() &&
        category_weights.size() != static_cast<size_t>(n_categories)) {
        throw std::invalid_argument("SceneConfig: weight count != n_categories");
    }
}

std::vector<std::string> default_category_names() {
    return {"disc", "square", "triangle", "diamond", "cross", "ring"};
}

namespace {

struct Rgb {
    double r, g, b;
};

// one fixed color per category; distinct from the earth-tone background
const Rgb kCategoryColors[] = {
    {0.86, 0.20, 0.18},  // disc: red
    {0.22, 0.72, 0.26},  // square: green
    {0.20, 0.38, 0.90},  // triangle: blue
    {0.92, 0.80, 0.16},  // diamond: yellow
    {0.82, 0.24, 0.80},  // cross: magenta
    {0.16, 0.80, 0.78},  // ring: cyan
};

bool inside_shape(int shape, double u, double v) {
    // (u, v) in the unit box frame [-1,1]^2
    if (std::fabs(u) > 1.0 || std::fabs(v) > 1.0) return false;
    switch (shape % 6) {
        case 0: return u * u + v * v <= 1.0;                       // disc
        case 1: return true;                                       // square
        case 2: return std::fabs(u) <= (v + 1.0) / 2.0;            // triangle, apex up
        case 3: return std::fabs(u) + std::fabs(v) <= 1.0;         // diamond
        case 4: return std::fabs(u) <= 0.34 || std::fabs(v) <= 0.34;  // cross
        case 5: {
            const double r = std::sqrt(u * u + v * v);
            return r >= 0.55 && r <= 1.0;  // ring
        }
    }
    return false;
}

// bilinearly interpolated random lattice, values in [0,1]
void add_value_noise(Image& img, nn::Rng& rng, int grid, double weight) {
    std::vector<double> lattice(static_cast<size_t>((grid + 1) * (grid + 1)));
    for (auto& v : lattice) v = rng.uniform();
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double gx = static_cast<double>(x) / img.width * grid;
            const double gy = static_cast<double>(y) / img.height * grid;
            const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
            const double fx = gx - ix, fy = gy - iy;
            auto lat = [&](int i, int j) { return lattice[static_cast<size_t>(j * (grid + 1) + i)]; };
            const double top = lat(ix, iy) * (1 - fx) + lat(ix + 1, iy) * fx;
            const double bot = lat(ix, iy + 1) * (1 - fx) + lat(ix + 1, iy + 1) * fx;
            img.at(x, y)[0] += weight * (top * (1 - fy) + bot * fy);
        }
    }
}

int weighted_category(const SceneConfig& cfg, nn::Rng& rng) {
    std::vector<double> w = cfg.category_weights;
    if (w.empty()) {
        // default skew so category frequencies are distinguishable
        for (int i = 0; i < cfg.n_categories; ++i) {
            w.push_back(3.0 / (1.0 + 0.55 * i));
        }
    }
    double total = 0.0;
    for (double v : w) total += v;
    double draw = rng.uniform() * total;
    for (int i = 0; i < cfg.n_categories; ++i) {
        draw -= w[static_cast<size_t>(i)];
        if (draw <= 0.0) return i;
    }
    return cfg.n_categories - 1;
}

}  // namespace

std::string prompt_for_layout(const LayoutSpec& layout, const std::vector<std::string>& names) {
    std::set<int> cats;
    for (const auto& b : layout.boxes) cats.insert(b.category_id);
    std::string prompt = "a remote sensing image of ";
    bool first = true;
    for (int c : cats) {
        if (!first) prompt += ", ";
        prompt += names[static_cast<size_t>(c)];
        first = false;
    }
    if (cats.empty()) prompt = "a remote sensing image of terrain";
    return prompt;
}

std::pair<Image, LayoutSpec> generate_scene(const SceneConfig& cfg, uint64_t seed,
                                            std::vector<int>* object_map) {
    cfg.validate();
    nn::Rng rng(seed);
    const int n = cfg.img_size;
    Image img(n, n);
    if (object_map) object_map->assign(static_cast<size_t>(n) * static_cast<size_t>(n), -1);

    // terrain: layered value noise mapped onto an earth-tone ramp
    Image noise(n, n, 0.0);
    add_value_noise(noise, rng, 4, 0.55);
    add_value_noise(noise, rng, 9, 0.30);
    add_value_noise(noise, rng, 21, 0.15);
    const Rgb lo{0.30, 0.34, 0.27}, hi{0.56, 0.53, 0.42};
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double v = 0.5 + (noise.at(x, y)[0] - 0.5) * 2.0 * cfg.background_contrast /
                                        0.18 * 0.5;
            const double t = std::clamp(v, 0.0, 1.0);
            img.set(x, y, lo.r + (hi.r - lo.r) * t, lo.g + (hi.g - lo.g) * t,
                    lo.b + (hi.b - lo.b) * t);
        }
    }

    LayoutSpec layout;
    layout.width = n;
    layout.height = n;
    const int target = static_cast<int>(rng.randint(cfg.min_objects, cfg.max_objects));
    std::vector<std::array<double, 4>> hulls;
    for (int obj = 0; obj < target; ++obj) {
        bool placed = false;
        for (int attempt = 0; attempt < 80 && !placed; ++attempt) {
            // later attempts prefer smaller objects so dense scenes still fill
            const double shrink = 1.0 - 0.6 * attempt / 80.0;
            const double s = rng.uniform(cfg.min_size, std::max(cfg.min_size, cfg.max_size * shrink));
            const double aspect = rng.uniform(0.55, 1.0);
            const double w = s, h = std::max(cfg.min_size * 0.55, s * aspect);
            const double theta = cfg.rotation_allowed ? rng.uniform(-M_PI / 2, M_PI / 2) : 0.0;
            const double c = std::fabs(std::cos(theta)), si = std::fabs(std::sin(theta));
            const double hx = (w * c + h * si) / 2.0, hy = (w * si + h * c) / 2.0;
            if (2 * hx + 4 > n || 2 * hy + 4 > n) continue;
            const double cx = rng.uniform(hx + 2.0, n - hx - 2.0);
            const double cy = rng.uniform(hy + 2.0, n - hy - 2.0);
            const std::array<double, 4> hull{cx - hx, cy - hy, cx + hx, cy + hy};
            bool overlaps = false;
            for (const auto& o : hulls) {
                if (hull[0] < o[2] + 2 && o[0] < hull[2] + 2 && hull[1] < o[3] + 2 &&
                    o[1] < hull[3] + 2) {
                    overlaps = true;
                    break;
                }
            }
            if (overlaps) continue;
            const int cat = weighted_category(cfg, rng);
            BoundingBox box = cfg.rotation_allowed
                                  ? corners_from_obb(cx, cy, w, h, theta, cat)
                                  : corners_from_hbb(cx - w / 2, cy - h / 2, cx + w / 2,
                                                     cy + h / 2, cat);
            box.kind = cfg.rotation_allowed ? BoxKind::OBB : BoxKind::HBB;
            hulls.push_back(hull);

            // render: pixel centers mapped into the box frame
            const double brightness = 1.0 + rng.uniform(-0.12, 0.12);
            const Rgb base = kCategoryColors[cat % 6];
            const double ct = std::cos(theta), st = std::sin(theta);
            const int x0 = std::max(0, static_cast<int>(std::floor(hull[0])));
            const int y0 = std::max(0, static_cast<int>(std::floor(hull[1])));
            const int x1 = std::min(n - 1, static_cast<int>(std::ceil(hull[2])));
            const int y1 = std::min(n - 1, static_cast<int>(std::ceil(hull[3])));
            for (int py = y0; py <= y1; ++py) {
                for (int px = x0; px <= x1; ++px) {
                    const double dx = (px + 0.5) - cx, dy = (py + 0.5) - cy;
                    const double u = (ct * dx + st * dy) / (w / 2.0);
                    const double v = (-st * dx + ct * dy) / (h / 2.0);
                    if (!inside_shape(cat, u, v)) continue;
                    const double tex = rng.uniform(-0.03, 0.03);
                    img.set(px, py, std::clamp(base.r * brightness + tex, 0.0, 1.0),
                            std::clamp(base.g * brightness + tex, 0.0, 1.0),
                            std::clamp(base.b * brightness + tex, 0.0, 1.0));
                    if (object_map) {
                        (*object_map)[static_cast<size_t>(py * n + px)] =
                            static_cast<int>(layout.boxes.size());
                    }
                }
            }
            layout.boxes.push_back(box);
            placed = true;
        }
    }
    layout.prompt = prompt_for_layout(layout, default_category_names());
    return {std::move(img), std::move(layout)};
}

// ---- annotation files ----------------------------------------------------------

namespace {

nlohmann::ordered_json entry_to_json(const ManifestEntry& e,
                                     const std::vector<std::string>& categories) {
    nlohmann::ordered_json j;
    j["image"] = e.image_path;
    j["width"] = e.layout.width;
    j["height"] = e.layout.height;
    j["prompt"] = e.layout.prompt;
    auto objs = nlohmann::ordered_json::array();
    for (const auto& b : e.layout.boxes) {
        nlohmann::ordered_json o;
        o["category"] = categories.at(static_cast<size_t>(b.category_id));
        o["kind"] = b.kind == BoxKind::HBB ? "hbb" : "obb";
        o["corners"] = b.corners;
        objs.push_back(std::move(o));
    }
    j["objects"] = std::move(objs);
    return j;
}

}  // namespace

void save_annotations(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_annotations: cannot open " + path);
    nlohmann::ordered_json header;
    header["format"] = "aerogen-annot";
    header["version"] = 1;
    header["modality"] = manifest.modality == BoxKind::HBB ? "hbb" : "obb";
    header["split"] = manifest.split;
    out << header.dump() << "\n";
    for (const auto& e : manifest.entries) {
        out << entry_to_json(e, manifest.categories).dump() << "\n";
    }
    if (!out) throw IoError("save_annotations: write failed for " + path);
}

DatasetManifest load_annotations(const std::string& path,
                                 const std::vector<std::string>& categories,
                                 std::optional<BoxKind> expect_modality, bool lenient) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("load_annotations: cannot open " + path);
    DatasetManifest m;
    m.categories = categories;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            if (!have_header) {
                if (j.value("format", "") != "aerogen-annot" || j.value("version", 0) != 1) {
                    throw ParseError("line 1: not an aerogen-annot v1 header");
                }
                const auto mod = j.at("modality").get<std::string>();
                m.modality = mod == "obb" ? BoxKind::OBB : BoxKind::HBB;
                m.split = j.value("split", "");
                if (expect_modality && m.modality != *expect_modality) {
                    throw ValidationError("manifest modality does not match expectation");
                }
                have_header = true;
                continue;
            }
            ManifestEntry e;
            e.image_path = j.at("image").get<std::string>();
            e.layout.width = j.at("width").get<int>();
            e.layout.height = j.at("height").get<int>();
            e.layout.prompt = j.value("prompt", "");
            for (const auto& o : j.at("objects")) {
                const auto cat_name = o.at("category").get<std::string>();
                const auto it = std::find(categories.begin(), categories.end(), cat_name);
                if (it == categories.end()) {
                    throw ValidationError("line " + std::to_string(line_no) +
                                          ": unknown category " + cat_name);
                }
                const int cat = static_cast<int>(it - categories.begin());
                const auto kind_s = o.at("kind").get<std::string>();
                const BoxKind kind = kind_s == "obb" ? BoxKind::OBB : BoxKind::HBB;
                const auto ca = o.at("corners").get<std::vector<double>>();
                if (ca.size() != 8) {
                    throw ValidationError("line " + std::to_string(line_no) +
                                          ": corners must have 8 values");
                }
                std::array<double, 8> corners{};
                std::copy(ca.begin(), ca.end(), corners.begin());
                bool in_frame = true;
                for (int i = 0; i < 4; ++i) {
                    if (corners[static_cast<size_t>(2 * i)] < 0 ||
                        corners[static_cast<size_t>(2 * i)] > e.layout.width ||
                        corners[static_cast<size_t>(2 * i + 1)] < 0 ||
                        corners[static_cast<size_t>(2 * i + 1)] > e.layout.height) {
                        in_frame = false;
                    }
                }
                if (!in_frame) {
                    if (!lenient) {
                        throw ValidationError("line " + std::to_string(line_no) +
                                              ": box out of frame (strict mode)");
                    }
                    for (int i = 0; i < 4; ++i) {
                        corners[static_cast<size_t>(2 * i)] = std::clamp(
                            corners[static_cast<size_t>(2 * i)], 0.0, static_cast<double>(e.layout.width));
                        corners[static_cast<size_t>(2 * i + 1)] =
                            std::clamp(corners[static_cast<size_t>(2 * i + 1)], 0.0,
                                       static_cast<double>(e.layout.height));
                    }
                }
                if (m.modality == BoxKind::HBB && kind == BoxKind::OBB) {
                    throw ValidationError("line " + std::to_string(line_no) +
                                          ": obb box in an hbb manifest");
                }
                try {
                    e.layout.boxes.push_back(box_from_corners(corners, cat, kind));
                } catch (const DegenerateBox& db) {
                    if (!lenient) {
                        throw ValidationError("line " + std::to_string(line_no) + ": " +
                                              db.what());
                    }
                    // lenient mode drops boxes that clipping collapsed
                }
            }
            m.entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) throw ParseError("line 1: missing header record");
    return m;
}

void save_category_table(const std::vector<std::string>& names, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_category_table: cannot open " + path);
    for (const auto& n : names) out << n << "\n";
}

std::vector<std::string> load_category_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_category_table: cannot open " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

DatasetManifest build_split(const SceneConfig& cfg, const std::string& dir,
                            const std::string& split, int n_images, uint64_t seed_base) {
    fs::create_directories(fs::path(dir) / "images");
    DatasetManifest m;
    m.split = split;
    m.modality = cfg.rotation_allowed ? BoxKind::OBB : BoxKind::HBB;
    m.categories = default_category_names();
    m.categories.resize(static_cast<size_t>(cfg.n_categories));
    for (int i = 0; i < n_images; ++i) {
        const uint64_t seed = nn::Rng::derive_seed(seed_base, split + "/" + std::to_string(i));
        auto [img, layout] = generate_scene(cfg, seed);
        char name[64];
        std::snprintf(name, sizeof(name), "images/%s_%05d.png", split.c_str(), i);
        write_png(img, (fs::path(dir) / name).string());
        ManifestEntry e;
        e.image_path = name;
        e.layout = std::move(layout);
        m.entries.push_back(std::move(e));
    }
    save_annotations(m, (fs::path(dir) / ("annotations_" + split + ".jsonl")).string());
    save_category_table(m.categories, (fs::path(dir) / "categories.txt").string());
    return m;
}

}  // namespace aerogen
