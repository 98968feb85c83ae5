#pragma once

#include <random>
#include <string>
#include <vector>

#include "gdip/detect.hpp"
#include "gdip/tensor.hpp"

namespace gdip {

// Fog via the atmospheric scattering model, ten difficulty levels.
struct FogParams {
    int level = 0;      // 0..9
    double a = 0.85;    // atmospheric light, [0.7, 1.0]
    double beta = 0.0;  // extinction coefficient
    void validate() const;
};

inline constexpr double kFogBetaMin = 0.05;
inline constexpr double kFogBetaMax = 1.0;
inline constexpr double kFogAMin = 0.7;
inline constexpr double kFogAMax = 1.0;

double fog_beta(int level);
FogParams make_fog_params(int level, double a);

struct DarkParams {
    double gamma_dark = 1.5;  // [1.5, 5]
    void validate() const;
};

inline constexpr double kDarkGammaMin = 1.5;
inline constexpr double kDarkGammaMax = 5.0;

// Pseudo-depth: pixel-center distance to the image center, normalized by the
// half-diagonal so it spans [0, 1).
double center_depth(int y, int x, int height, int width);

Image apply_fog_asm(const Image& img, const FogParams& p);
Image apply_dark(const Image& img, const DarkParams& p);

// Procedural detection scene: textured background plus 1-5 solid shapes
// (classes circle, square, triangle) with tight axis-aligned boxes.
struct SceneObject {
    int shape = 0;  // class index into kClassNames
    double cx = 0.5, cy = 0.5;
    double scale = 0.2;  // object extent as a fraction of the canvas side
    std::array<double, 3> color{};
};

struct SceneSpec {
    std::uint64_t seed = 0;
    int size = 96;
    std::vector<SceneObject> objects;  // empty: sample 1-5 objects from seed
};

void synth_scene(const SceneSpec& spec, Image& img, DetectionTarget& target);

// Condition of one emitted training sample.
enum class Adversity { Fog, Dark, Mixed };
Adversity parse_adversity(const std::string& s);

struct HybridSample {
    std::size_t index = 0;  // clear-pool element
    bool adverse = false;
    bool fog = false;  // fog vs dark when adverse
    FogParams fog_p;
    DarkParams dark_p;
};

// Deterministic 2:1 adverse:clear sampler over a clear pool.
class HybridSampler {
  public:
    HybridSampler(std::size_t pool_size, Adversity kind, std::uint64_t seed);
    HybridSample next();

  private:
    std::size_t pool_size_;
    Adversity kind_;
    std::mt19937_64 rng_;
};

std::string condition_tag(const HybridSample& s);

// On-disk dataset: images + target files + manifest rows
// (image, target, condition, clear source).
struct ManifestRow {
    std::string image, target, condition, clear;
};

std::vector<ManifestRow> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

// Generates `count` samples into `dir` and writes dir/manifest.csv.
// condition: "clear", "fog", "dark", or "mixed" (hybrid 2:1 sampler).
std::vector<ManifestRow> generate_dataset(const std::string& dir, int count,
                                          const std::string& condition, std::uint64_t seed,
                                          int size);

}  // namespace gdip
