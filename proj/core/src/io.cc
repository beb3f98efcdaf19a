#include "ctxgen/io.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ctxgen/errors.h"

namespace ctxgen {
namespace fs = std::filesystem;
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  void SkipSpaceAndComments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int64_t ReadInt(const char* what) {
    SkipSpaceAndComments();
    const size_t start = pos_;
    int64_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1 << 24)) throw ParseError(std::string("netpbm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("netpbm: expected ") + what, start);
    return v;
  }

  size_t pos() const { return pos_; }
  void Advance(size_t n) { pos_ += n; }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

struct NetpbmHeader {
  int64_t width;
  int64_t height;
  size_t data_offset;
};

NetpbmHeader ReadNetpbmHeader(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic) {
    throw ParseError("netpbm: expected magic " + std::string(magic), 0);
  }
  HeaderReader r(bytes);
  r.Advance(2);
  NetpbmHeader h{};
  h.width = r.ReadInt("width");
  h.height = r.ReadInt("height");
  const int64_t maxval = r.ReadInt("maxval");
  if (h.width <= 0 || h.height <= 0) throw ParseError("netpbm: zero image size", r.pos());
  if (maxval != 255) throw ParseError("netpbm: maxval must be 255", r.pos());
  if (r.pos() >= bytes.size()) throw ParseError("netpbm: missing data", r.pos());
  h.data_offset = r.pos() + 1;  // exactly one whitespace byte
  return h;
}

std::vector<std::string> SplitCsv(std::string_view line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double ParseDouble(const std::string& s, const std::string& context, size_t offset) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(context + ": bad number '" + s + "'", offset);
  }
  return v;
}

template <typename T = int64_t>
T ParseInt(const std::string& s, const std::string& context, size_t offset) {
  T v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(context + ": bad integer '" + s + "'", offset);
  }
  return v;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Iterates lines and keeps the byte offset of each line start.
template <typename F>
void ForEachLine(std::string_view text, F f) {
  size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    f(line, pos, lineno);
    pos = end + 1;
  }
}

}  // namespace

std::string HexU64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void WriteFileAtomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string EncodePpm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("EncodePpm: expected [3,H,W]");
  const int64_t h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(3 * h * w));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image[(c * h + y) * w + x], 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  return out;
}

Tensor DecodePpm(std::string_view bytes) {
  const NetpbmHeader hdr = ReadNetpbmHeader(bytes, "P6");
  const auto need = static_cast<size_t>(3 * hdr.width * hdr.height);
  if (bytes.size() < hdr.data_offset + need) {
    throw ParseError("ppm: truncated pixel data", bytes.size());
  }
  Tensor image({3, hdr.height, hdr.width});
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + hdr.data_offset);
  for (int64_t y = 0; y < hdr.height; ++y) {
    for (int64_t x = 0; x < hdr.width; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        image[(c * hdr.height + y) * hdr.width + x] = data[(y * hdr.width + x) * 3 + c] / 255.0;
      }
    }
  }
  return image;
}

std::string EncodePgm(const LabelMap& labels) {
  std::string out = "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
  for (int v : labels.values) {
    if (v < 0 || v > 255) throw ContractError("EncodePgm: value out of [0,255]");
    out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

LabelMap DecodePgm(std::string_view bytes) {
  const NetpbmHeader hdr = ReadNetpbmHeader(bytes, "P5");
  const auto need = static_cast<size_t>(hdr.width * hdr.height);
  if (bytes.size() < hdr.data_offset + need) throw ParseError("pgm: truncated pixel data", bytes.size());
  LabelMap labels(hdr.height, hdr.width);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + hdr.data_offset);
  for (size_t i = 0; i < need; ++i) labels.values[i] = data[i];
  return labels;
}

std::string EncodeEmbeddingsCsv(const WordEmbeddingTable& table) {
  std::string out;
  for (int id = 0; id < table.num_categories(); ++id) {
    out += std::to_string(id) + "," + table.names[static_cast<size_t>(id)] + "," + (table.is_seen(id) ? "1" : "0");
    for (int j = 0; j < table.dim; ++j) out += "," + FormatDouble(table.rows[static_cast<int64_t>(id) * table.dim + j]);
    out += "\n";
  }
  return out;
}

WordEmbeddingTable DecodeEmbeddingsCsv(std::string_view text) {
  WordEmbeddingTable table;
  std::vector<double> values;
  ForEachLine(text, [&](std::string_view line, size_t offset, int lineno) {
    if (line.empty() || line.front() == '#') return;
    const auto fields = SplitCsv(line);
    const std::string ctx = "embeddings row " + std::to_string(lineno);
    if (fields.size() < 4) throw ParseError(ctx + ": expected id,name,seen_flag,values", offset);
    const int dim = static_cast<int>(fields.size()) - 3;
    if (table.dim == 0) table.dim = dim;
    if (dim != table.dim) {
      throw ParseError(ctx + ": has " + std::to_string(dim) + " values, expected " + std::to_string(table.dim), offset);
    }
    const int64_t id = ParseInt(fields[0], ctx, offset);
    if (id != table.num_categories()) throw ParseError(ctx + ": ids must be contiguous from 0", offset);
    table.names.push_back(fields[1]);
    if (fields[2] == "1") {
      table.seen_ids.push_back(static_cast<int>(id));
    } else if (fields[2] == "0") {
      table.unseen_ids.push_back(static_cast<int>(id));
    } else {
      throw ParseError(ctx + ": seen_flag must be 0 or 1", offset);
    }
    for (size_t j = 3; j < fields.size(); ++j) values.push_back(ParseDouble(fields[j], ctx, offset));
  });
  if (table.names.empty()) throw ParseError("embeddings: no rows", 0);
  table.rows = Tensor({table.num_categories(), table.dim}, std::move(values));
  return table;
}

size_t DatasetManifest::count(std::string_view split) const {
  return static_cast<size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const ManifestEntry& e) { return e.split == split; }));
}

std::string EncodeManifest(const DatasetManifest& m) {
  std::string out = "# ctxgen synthetic segmentation corpus\nformat=ctxgen-corpus-1\n";
  std::istringstream cfg(m.config.Serialize());
  std::string line;
  while (std::getline(cfg, line)) out += "config." + line + "\n";
  out += "config_hash=" + m.config_hash + "\n";
  out += "embeddings=" + m.embeddings_path + "\n";
  for (const CategorySpec& c : m.categories) {
    out += "category=" + std::to_string(c.id) + "," + c.name + "," + (c.seen ? "1" : "0");
    for (double a : c.attributes) out += "," + FormatDouble(a);
    out += "\n";
  }
  for (const ManifestEntry& e : m.samples) {
    out += "sample=" + e.split + "," + e.image_path + "," + e.label_path + "," + std::to_string(e.seed) + "\n";
  }
  return out;
}

DatasetManifest DecodeManifest(std::string_view text) {
  DatasetManifest m;
  std::string config_text;
  bool have_format = false;
  ForEachLine(text, [&](std::string_view line, size_t offset, int lineno) {
    if (line.empty() || line.front() == '#') return;
    const size_t eq = line.find('=');
    const std::string ctx = "manifest line " + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ParseError(ctx + ": expected key=value", offset);
    const std::string key(line.substr(0, eq));
    const std::string value(line.substr(eq + 1));
    if (key == "format") {
      if (value != "ctxgen-corpus-1") throw ParseError(ctx + ": unsupported format '" + value + "'", offset);
      have_format = true;
    } else if (key.rfind("config.", 0) == 0) {
      config_text += key.substr(7) + "=" + value + "\n";
    } else if (key == "config_hash") {
      m.config_hash = value;
    } else if (key == "embeddings") {
      m.embeddings_path = value;
    } else if (key == "category") {
      const auto f = SplitCsv(value);
      if (f.size() != static_cast<size_t>(3 + kAttributeDims)) throw ParseError(ctx + ": category has wrong arity", offset);
      CategorySpec c;
      c.id = static_cast<int>(ParseInt(f[0], ctx, offset));
      c.name = f[1];
      c.seen = f[2] == "1";
      for (size_t j = 3; j < f.size(); ++j) c.attributes.push_back(ParseDouble(f[j], ctx, offset));
      m.categories.push_back(std::move(c));
    } else if (key == "sample") {
      const auto f = SplitCsv(value);
      if (f.size() != 4) throw ParseError(ctx + ": sample has wrong arity", offset);
      if (f[0] != "train" && f[0] != "test") throw ParseError(ctx + ": unknown split '" + f[0] + "'", offset);
      m.samples.push_back({f[0], f[1], f[2], ParseInt<uint64_t>(f[3], ctx, offset)});
    } else {
      throw ParseError(ctx + ": unknown key '" + key + "'", offset);
    }
  });
  if (!have_format) throw ParseError("manifest: missing format line", 0);
  try {
    m.config = ParseDatasetConfig(config_text);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("manifest config: ") + e.what(), 0);
  }
  return m;
}

DatasetManifest SaveCorpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  DatasetManifest m;
  m.config = corpus.config;
  m.config_hash = HexU64(corpus.config.Hash());
  m.categories = corpus.categories;
  WriteFileAtomic(dir / m.embeddings_path, EncodeEmbeddingsCsv(corpus.embeddings));
  auto write_split = [&](const std::vector<SegSample>& samples, const std::string& split) {
    for (size_t i = 0; i < samples.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "%04zu", i);
      ManifestEntry e{split, split + "/img_" + stem + ".ppm", split + "/lbl_" + stem + ".pgm", samples[i].seed};
      WriteFileAtomic(dir / e.image_path, EncodePpm(samples[i].image));
      WriteFileAtomic(dir / e.label_path, EncodePgm(samples[i].labels));
      m.samples.push_back(std::move(e));
    }
  };
  write_split(corpus.train, "train");
  write_split(corpus.test, "test");
  WriteFileAtomic(dir / "manifest.txt", EncodeManifest(m));
  return m;
}

Corpus LoadCorpus(const fs::path& dir) {
  const DatasetManifest m = DecodeManifest(ReadFile(dir / "manifest.txt"));
  if (HexU64(m.config.Hash()) != m.config_hash) {
    throw ParseError("manifest: config_hash does not match config fields", 0);
  }
  Corpus corpus;
  corpus.config = m.config;
  corpus.categories = m.categories;
  ValidateCategories(corpus.categories);
  corpus.embeddings = DecodeEmbeddingsCsv(ReadFile(dir / m.embeddings_path));
  if (corpus.embeddings.num_categories() != corpus.num_categories()) {
    throw ParseError("embedding table has " + std::to_string(corpus.embeddings.num_categories()) +
                         " rows but manifest lists " + std::to_string(corpus.num_categories()) + " categories",
                     0);
  }
  for (const ManifestEntry& e : m.samples) {
    SegSample s;
    s.image = DecodePpm(ReadFile(dir / e.image_path));
    s.labels = DecodePgm(ReadFile(dir / e.label_path));
    s.seed = e.seed;
    (e.split == "train" ? corpus.train : corpus.test).push_back(std::move(s));
  }
  return corpus;
}

std::string DirectoryDigest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir));
  }
  std::sort(files.begin(), files.end());
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
  };
  for (const fs::path& f : files) {
    mix(f.generic_string());
    mix(std::string_view("\0", 1));
    mix(ReadFile(dir / f));
  }
  return HexU64(h);
}

}  // namespace ctxgen
