#include "ctxgen/datagen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "ctxgen/errors.h"
#include "ctxgen/rng.h"

namespace ctxgen {
namespace {

constexpr std::array<const char*, kNumShapes> kShapeNames = {"disk", "square", "triangle", "diamond"};
constexpr std::array<const char*, kNumColors> kColorNames = {"red", "green", "blue", "yellow"};
constexpr std::array<const char*, 4> kTextureNames = {"flat", "hstripe", "vstripe", "checker"};
constexpr std::array<std::array<double, 3>, kNumColors> kColorRgb = {{
    {0.85, 0.20, 0.20},
    {0.20, 0.75, 0.25},
    {0.20, 0.30, 0.85},
    {0.85, 0.80, 0.20},
}};

constexpr double kColorGain = 0.65;
constexpr double kPatternGain = 0.35;

int ArgMax(const std::vector<double>& v, int begin, int count) {
  int best = begin;
  for (int i = begin + 1; i < begin + count; ++i) {
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  }
  return best - begin;
}

bool InsideShape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:
      return dx * dx + dy * dy <= r * r;
    case 1:
      return std::max(std::abs(dx), std::abs(dy)) <= 0.85 * r;
    case 2:
      return dy <= r && dy >= -r && std::abs(dx) <= (dy + r) / 2.0;
    default:
      return std::abs(dx) + std::abs(dy) <= r;
  }
}

struct Paint {
  int category;
  double phase_x;
  double phase_y;
};

double Pattern(const CategorySpec& c, int period, double x, double y, const Paint& p) {
  const bool hs = c.texture(0) > 0.5;
  const bool vs = c.texture(1) > 0.5;
  const int half = std::max(1, period / 2);
  const int hv = static_cast<int>(std::floor((y + p.phase_y) / half)) & 1;
  const int vv = static_cast<int>(std::floor((x + p.phase_x) / half)) & 1;
  if (hs && vs) return static_cast<double>(hv ^ vv);
  if (hs) return hv;
  if (vs) return vv;
  return 0.5;
}

uint64_t SampleSeed(uint64_t corpus_seed, uint64_t split, uint64_t index) {
  return SplitMix64(corpus_seed ^ SplitMix64((split << 32) | index));
}

}  // namespace

int CategorySpec::shape() const { return ArgMax(attributes, 0, kNumShapes); }
int CategorySpec::color() const { return ArgMax(attributes, kNumShapes, kNumColors); }

std::vector<CategorySpec> DefaultCategories() {
  std::vector<CategorySpec> out;
  for (int color = 0; color < kNumColors; ++color) {
    for (int texture = 0; texture < 4; ++texture) {
      CategorySpec c;
      c.id = static_cast<int>(out.size());
      c.name = std::string(kColorNames[static_cast<size_t>(color)]) + "_" + kTextureNames[static_cast<size_t>(texture)];
      c.attributes.assign(kAttributeDims, 0.0);
      const int shape = texture;
      c.attributes[static_cast<size_t>(shape)] = 1.0;
      c.attributes[static_cast<size_t>(kNumShapes + color)] = 1.0;
      c.attributes[kNumShapes + kNumColors + 0] = (texture == 1 || texture == 3) ? 1.0 : 0.0;
      c.attributes[kNumShapes + kNumColors + 1] = (texture == 2 || texture == 3) ? 1.0 : 0.0;
      c.seen = texture != (color + 1) % 4;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void ValidateCategories(const std::vector<CategorySpec>& categories) {
  int seen = 0, unseen = 0;
  for (size_t i = 0; i < categories.size(); ++i) {
    const CategorySpec& c = categories[i];
    if (c.id != static_cast<int>(i)) throw ConfigError("category ids must be contiguous from 0");
    if (static_cast<int>(c.attributes.size()) != kAttributeDims) {
      throw ConfigError("category '" + c.name + "' has " + std::to_string(c.attributes.size()) +
                        " attributes, expected " + std::to_string(kAttributeDims));
    }
    (c.seen ? seen : unseen)++;
  }
  if (static_cast<int>(categories.size()) >= kIgnore) throw ConfigError("too many categories");
  if (seen < 2) throw ConfigError("need at least 2 seen categories");
  if (unseen < 1) throw ConfigError("need at least 1 unseen category");
  for (const CategorySpec& u : categories) {
    if (u.seen) continue;
    bool shape = false, color = false;
    std::array<bool, kTextureDims> texture{};
    for (const CategorySpec& s : categories) {
      if (!s.seen) continue;
      shape = shape || s.shape() == u.shape();
      color = color || s.color() == u.color();
      for (int k = 0; k < kTextureDims; ++k) {
        texture[static_cast<size_t>(k)] = texture[static_cast<size_t>(k)] || s.texture(k) == u.texture(k);
      }
    }
    const bool all_texture = std::all_of(texture.begin(), texture.end(), [](bool b) { return b; });
    if (!shape || !color || !all_texture) {
      throw ConfigError("unseen category '" + u.name + "' has an attribute no seen category shares");
    }
  }
}

bool WordEmbeddingTable::is_seen(int id) const {
  return std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end();
}

WordEmbeddingTable BuildEmbeddings(const std::vector<CategorySpec>& categories, int dim, uint64_t seed) {
  if (dim < kAttributeDims) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " is smaller than the attribute length " +
                      std::to_string(kAttributeDims));
  }
  const int extra = dim - kAttributeDims;
  Rng rng(seed);
  std::vector<double> projection(static_cast<size_t>(extra * kAttributeDims));
  for (double& v : projection) v = rng.Normal() / std::sqrt(static_cast<double>(kAttributeDims));

  WordEmbeddingTable table;
  table.dim = dim;
  const auto k = static_cast<int64_t>(categories.size());
  table.rows = Tensor({k, dim});
  for (const CategorySpec& c : categories) {
    table.names.push_back(c.name);
    (c.seen ? table.seen_ids : table.unseen_ids).push_back(c.id);
    double* row = table.rows.raw() + static_cast<int64_t>(c.id) * dim;
    for (int j = 0; j < kAttributeDims; ++j) row[j] = c.attributes[static_cast<size_t>(j)];
    for (int e = 0; e < extra; ++e) {
      double s = 0.0;
      for (int j = 0; j < kAttributeDims; ++j) {
        s += projection[static_cast<size_t>(e * kAttributeDims + j)] * c.attributes[static_cast<size_t>(j)];
      }
      row[kAttributeDims + e] = s;
    }
    double norm = 0.0;
    for (int j = 0; j < dim; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (int j = 0; j < dim; ++j) row[j] /= norm;
    }
  }
  return table;
}

std::string DatasetConfig::Serialize() const {
  std::ostringstream os;
  os << "image_size=" << image_size << '\n'
     << "num_train=" << num_train << '\n'
     << "num_test=" << num_test << '\n'
     << "min_objects=" << min_objects << '\n'
     << "max_objects=" << max_objects << '\n'
     << "min_radius=" << min_radius << '\n'
     << "max_radius=" << max_radius << '\n'
     << "stripe_period=" << stripe_period << '\n';
  os.precision(17);
  os << "noise=" << noise << '\n'
     << "embedding_dim=" << embedding_dim << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

uint64_t DatasetConfig::Hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (char ch : Serialize()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

DatasetConfig ParseDatasetConfig(const std::string& text) {
  DatasetConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "image_size") cfg.image_size = std::stoi(value);
      else if (key == "num_train") cfg.num_train = std::stoi(value);
      else if (key == "num_test") cfg.num_test = std::stoi(value);
      else if (key == "min_objects") cfg.min_objects = std::stoi(value);
      else if (key == "max_objects") cfg.max_objects = std::stoi(value);
      else if (key == "min_radius") cfg.min_radius = std::stoi(value);
      else if (key == "max_radius") cfg.max_radius = std::stoi(value);
      else if (key == "stripe_period") cfg.stripe_period = std::stoi(value);
      else if (key == "noise") cfg.noise = std::stod(value);
      else if (key == "embedding_dim") cfg.embedding_dim = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

SegSample RenderScene(const DatasetConfig& config, const std::vector<CategorySpec>& categories,
                      uint64_t sample_seed, bool with_unseen_labels) {
  const int size = config.image_size;
  const int k = static_cast<int>(categories.size());
  Rng rng(sample_seed);

  std::vector<Paint> paints;
  auto random_paint = [&](int category) {
    return Paint{category, rng.Uniform() * config.stripe_period, rng.Uniform() * config.stripe_period};
  };
  LabelMap owner(size, size, 0);
  paints.push_back(random_paint(static_cast<int>(rng.UniformInt(static_cast<uint64_t>(k)))));

  const int span = config.max_objects - config.min_objects + 1;
  const int objects = config.min_objects + static_cast<int>(rng.UniformInt(static_cast<uint64_t>(span)));
  for (int o = 0; o < objects; ++o) {
    int category = static_cast<int>(rng.UniformInt(static_cast<uint64_t>(k)));
    if (category == paints[0].category) category = (category + 1 + static_cast<int>(rng.UniformInt(static_cast<uint64_t>(k - 1)))) % k;
    const double r = config.min_radius + rng.Uniform() * (config.max_radius - config.min_radius);
    const double cx = rng.Uniform() * size;
    const double cy = rng.Uniform() * size;
    paints.push_back(random_paint(category));
    const int shape = categories[static_cast<size_t>(category)].shape();
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (InsideShape(shape, x + 0.5 - cx, y + 0.5 - cy, r)) owner.at(y, x) = static_cast<int>(paints.size() - 1);
      }
    }
  }

  SegSample sample;
  sample.seed = sample_seed;
  sample.image = Tensor({3, size, size});
  sample.labels = LabelMap(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Paint& p = paints[static_cast<size_t>(owner.at(y, x))];
      const CategorySpec& c = categories[static_cast<size_t>(p.category)];
      // Texture is a gray pattern added to every channel, so it reads the
      // same under any color.
      const double luminance = kPatternGain * Pattern(c, config.stripe_period, x, y, p);
      const auto& rgb = kColorRgb[static_cast<size_t>(c.color())];
      for (int ch = 0; ch < 3; ++ch) {
        double v = kColorGain * rgb[static_cast<size_t>(ch)] + luminance + config.noise * rng.Normal();
        v = std::clamp(v, 0.0, 1.0);
        sample.image[(static_cast<int64_t>(ch) * size + y) * size + x] = std::round(v * 255.0) / 255.0;
      }
      sample.labels.at(y, x) = (c.seen || with_unseen_labels) ? c.id : kIgnore;
    }
  }
  return sample;
}

Corpus GenerateCorpus(const DatasetConfig& config, const std::vector<CategorySpec>& categories) {
  ValidateCategories(categories);
  if (config.image_size < 32) throw ConfigError("image_size must be at least 32");
  if (config.num_train < 0 || config.num_test < 0) throw ConfigError("sample counts must be non-negative");
  if (config.min_objects < 0 || config.max_objects < config.min_objects) throw ConfigError("bad object count range");
  if (config.min_radius < 1 || config.max_radius < config.min_radius) throw ConfigError("bad radius range");
  if (config.stripe_period < 2) throw ConfigError("stripe_period must be at least 2");

  Corpus corpus;
  corpus.config = config;
  corpus.categories = categories;
  corpus.embeddings = BuildEmbeddings(categories, config.embedding_dim, SplitMix64(config.seed ^ 0xE3BEDDULL));
  for (int i = 0; i < config.num_train; ++i) {
    corpus.train.push_back(RenderScene(config, categories, SampleSeed(config.seed, 0, static_cast<uint64_t>(i)), false));
  }
  for (int i = 0; i < config.num_test; ++i) {
    corpus.test.push_back(RenderScene(config, categories, SampleSeed(config.seed, 1, static_cast<uint64_t>(i)), true));
  }
  return corpus;
}

LabelMap DownsampleLabels(const LabelMap& labels, int factor) {
  if (factor < 1) throw DimensionError("downsample factor must be positive");
  if (labels.height % factor != 0 || labels.width % factor != 0) {
    throw DimensionError("label map " + std::to_string(labels.height) + "x" + std::to_string(labels.width) +
                         " is not divisible by " + std::to_string(factor));
  }
  LabelMap out(labels.height / factor, labels.width / factor);
  for (int64_t y = 0; y < out.height; ++y) {
    for (int64_t x = 0; x < out.width; ++x) out.at(y, x) = labels.at(y * factor, x * factor);
  }
  return out;
}

LabelMap UpsampleLabels(const LabelMap& labels, int factor) {
  if (factor < 1) throw DimensionError("upsample factor must be positive");
  LabelMap out(labels.height * factor, labels.width * factor);
  for (int64_t y = 0; y < out.height; ++y) {
    for (int64_t x = 0; x < out.width; ++x) out.at(y, x) = labels.at(y / factor, x / factor);
  }
  return out;
}

}  // namespace ctxgen
