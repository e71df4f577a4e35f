#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aerogen/io/image_io.hpp"
#include "aerogen/layout_codec.hpp"

namespace aerogen {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Procedural "geo-shapes" scenes: value-noise terrain plus category-distinct
// colored primitives with exact annotations.
struct SceneConfig {
    int img_size = 128;
    int n_categories = 6;
    int min_objects = 2;
    int max_objects = 6;
    double min_size = 16.0;
    double max_size = 40.0;
    bool rotation_allowed = false;           // OBB mode when true
    std::vector<double> category_weights;    // empty = default non-uniform mix
    double background_contrast = 0.18;       // texture amplitude

    void validate() const;
};

struct ManifestEntry {
    std::string image_path;  // relative to the manifest's directory
    LayoutSpec layout;
};

struct DatasetManifest {
    std::string split;
    std::vector<ManifestEntry> entries;
    std::vector<std::string> categories;
    BoxKind modality = BoxKind::HBB;
};

std::vector<std::string> default_category_names();

// Deterministic per seed. object_map (optional) receives per-pixel object
// indices (-1 = background) for coverage checks.
std::pair<Image, LayoutSpec> generate_scene(const SceneConfig& cfg, uint64_t seed,
                                            std::vector<int>* object_map = nullptr);

// JSONL annotation format; first line is the header record
// {"format":"aerogen-annot","version":1,"modality":...,"split":...}.
void save_annotations(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_annotations(const std::string& path,
                                 const std::vector<std::string>& categories,
                                 std::optional<BoxKind> expect_modality = std::nullopt,
                                 bool lenient = false);

// one category name per line, line index = category_id
void save_category_table(const std::vector<std::string>& names, const std::string& path);
std::vector<std::string> load_category_table(const std::string& path);

// Renders a split into dir/images/*.png and dir/annotations.jsonl; the
// manifest returned references images relative to dir.
DatasetManifest build_split(const SceneConfig& cfg, const std::string& dir,
                            const std::string& split, int n_images, uint64_t seed_base);

std::string prompt_for_layout(const LayoutSpec& layout, const std::vector<std::string>& names);

}  // namespace aerogen
