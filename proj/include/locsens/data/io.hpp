#pragma once

// On-disk dataset layout (one directory):
//   metadata.tsv  "#locsens-metadata<TAB>1<TAB>count" then
//                 id<TAB>lat<TAB>lon<TAB>country<TAB>town<TAB>tag1,tag2,...
//   features.bin  "LSFV" u32 version, u64 count, u64 dim, count*dim f32 (LE),
//                 rows in metadata (id) order
//   vocab.txt     "#locsens-vocab<TAB>1<TAB>H" then one label per line
//   splits.tsv    "#locsens-split<TAB>1<TAB>count" then id<TAB>train|val|test

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "locsens/data/records.hpp"
#include "locsens/error.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::data {

static_assert(std::endian::native == std::endian::little,
              "feature file I/O assumes a little-endian host");

inline constexpr std::uint32_t kMetadataVersion = 1;
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint32_t kVocabVersion = 1;
inline constexpr std::uint32_t kSplitVersion = 1;

namespace detail {

/// Shortest text that parses back to the identical value.
template <typename T>
std::string format_exact(T value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view text, const std::string& where) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(where + ": cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split_view(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline void check_field(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n\r,") != std::string::npos) {
    throw ValidationError(std::string(what) + " contains a tab, comma or newline: " + s);
  }
}

inline std::ofstream open_out(const std::filesystem::path& p, bool binary = false) {
  std::ofstream out(p, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error("cannot open " + p.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p, bool binary = false) {
  std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error("cannot open " + p.string());
  return in;
}

/// Parses "#<name><TAB><version><TAB><count>" and returns count.
inline std::uint64_t read_header(std::istream& in, const std::string& path,
                                 std::string_view name, std::uint32_t version) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": missing header line");
  auto fields = split_view(line, '\t');
  if (fields.size() != 3 || fields[0] != std::string("#") + std::string(name)) {
    throw FormatError(path + ": bad header, expected '#" + std::string(name) + "'");
  }
  const auto v = parse_number<std::uint32_t>(fields[1], path + " header");
  if (v != version) {
    throw FormatError(path + ": unsupported version " + std::to_string(v) + " (expected " +
                      std::to_string(version) + ")");
  }
  return parse_number<std::uint64_t>(fields[2], path + " header");
}

}  // namespace detail

/// Writes features for `records` in order.
inline void write_features(const std::filesystem::path& path,
                           const std::vector<PhotoRecord>& records, std::size_t dim) {
  auto out = detail::open_out(path, true);
  out.write("LSFV", 4);
  const std::uint32_t version = kFeatureVersion;
  const std::uint64_t count = records.size();
  const std::uint64_t d = dim;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  out.write(reinterpret_cast<const char*>(&d), 8);
  for (const auto& r : records) {
    out.write(reinterpret_cast<const char*>(r.feature.data()),
              static_cast<std::streamsize>(r.feature.size() * sizeof(float)));
  }
  if (!out) throw Error("write failed for " + path.string());
}

/// Reads the feature matrix; returns one vector per row.
inline std::vector<std::vector<float>> read_features(const std::filesystem::path& path,
                                                     std::uint64_t expected_count) {
  auto in = detail::open_in(path, true);
  const std::string p = path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "LSFV", 4) != 0) {
    throw FormatError(p + ": bad magic at offset 0, expected \"LSFV\"");
  }
  std::uint32_t version = 0;
  std::uint64_t count = 0, dim = 0;
  if (!in.read(reinterpret_cast<char*>(&version), 4)) throw FormatError(p + ": truncated header at offset 4");
  if (version != kFeatureVersion) {
    throw FormatError(p + ": unsupported feature file version " + std::to_string(version) +
                      " (expected " + std::to_string(kFeatureVersion) + ")");
  }
  if (!in.read(reinterpret_cast<char*>(&count), 8)) throw FormatError(p + ": truncated header at offset 8");
  if (!in.read(reinterpret_cast<char*>(&dim), 8)) throw FormatError(p + ": truncated header at offset 16");
  if (count != expected_count) {
    throw FormatError(p + ": feature count " + std::to_string(count) +
                      " does not match metadata count " + std::to_string(expected_count));
  }
  const std::uint64_t expected_bytes = count * dim * sizeof(float);
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto actual_bytes = static_cast<std::uint64_t>(in.tellg() - start);
  if (actual_bytes != expected_bytes) {
    throw FormatError(p + ": expected " + std::to_string(expected_bytes) +
                      " bytes of feature data after offset 24, found " +
                      std::to_string(actual_bytes));
  }
  in.seekg(start);
  std::vector<std::vector<float>> rows(count, std::vector<float>(dim));
  for (auto& row : rows) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float)));
  }
  return rows;
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  const auto& vocab = ds.vocab();
  {
    auto out = detail::open_out(dir / "vocab.txt");
    out << "#locsens-vocab\t" << kVocabVersion << '\t' << vocab.size() << '\n';
    for (const auto& l : vocab.labels()) {
      detail::check_field(l, "tag label");
      out << l << '\n';
    }
  }
  {
    auto out = detail::open_out(dir / "metadata.tsv");
    out << "#locsens-metadata\t" << kMetadataVersion << '\t' << ds.records().size() << '\n';
    for (const auto& r : ds.records()) {
      const std::string country = r.country.value_or("");
      const std::string town = r.town.value_or("");
      detail::check_field(country, "country");
      detail::check_field(town, "town");
      out << r.id << '\t' << detail::format_exact(r.location.lat_deg) << '\t'
          << detail::format_exact(r.location.lon_deg) << '\t' << country << '\t' << town << '\t';
      for (std::size_t i = 0; i < r.tags.size(); ++i) {
        if (i) out << ',';
        out << vocab.label(r.tags[i]);
      }
      out << '\n';
    }
  }
  write_features(dir / "features.bin", ds.records(), ds.feature_dim());
  {
    auto out = detail::open_out(dir / "splits.tsv");
    const auto& s = ds.split();
    out << "#locsens-split\t" << kSplitVersion << '\t'
        << (s.train.size() + s.val.size() + s.test.size()) << '\n';
    for (ImageId id : s.train) out << id << "\ttrain\n";
    for (ImageId id : s.val) out << id << "\tval\n";
    for (ImageId id : s.test) out << id << "\ttest\n";
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::vector<std::string> labels;
  {
    const std::string p = (dir / "vocab.txt").string();
    auto in = detail::open_in(p);
    const auto n = detail::read_header(in, p, "locsens-vocab", kVocabVersion);
    std::string line;
    while (std::getline(in, line)) labels.push_back(line);
    if (labels.size() != n) {
      throw FormatError(p + ": header declares " + std::to_string(n) + " labels, found " +
                        std::to_string(labels.size()));
    }
  }
  TagVocabulary vocab(labels);

  std::vector<PhotoRecord> records;
  {
    const std::string p = (dir / "metadata.tsv").string();
    auto in = detail::open_in(p);
    const auto n = detail::read_header(in, p, "locsens-metadata", kMetadataVersion);
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = p + ":" + std::to_string(lineno);
      auto f = detail::split_view(line, '\t');
      if (f.size() != 6) throw FormatError(where + ": expected 6 fields, got " + std::to_string(f.size()));
      PhotoRecord r;
      r.id = detail::parse_number<ImageId>(f[0], where);
      r.location = {detail::parse_number<double>(f[1], where), detail::parse_number<double>(f[2], where)};
      if (!geo::is_valid(r.location)) throw FormatError(where + ": location out of range");
      if (!f[3].empty()) r.country = std::string(f[3]);
      if (!f[4].empty()) r.town = std::string(f[4]);
      if (f[5].empty()) throw FormatError(where + ": record has no tags");
      for (auto t : detail::split_view(f[5], ',')) {
        auto id = vocab.find(std::string(t));
        if (!id) throw FormatError(where + ": tag '" + std::string(t) + "' not in vocabulary");
        r.tags.push_back(*id);
      }
      std::sort(r.tags.begin(), r.tags.end());
      records.push_back(std::move(r));
    }
    if (records.size() != n) {
      throw FormatError(p + ": header declares " + std::to_string(n) + " records, found " +
                        std::to_string(records.size()));
    }
  }
  auto features = read_features(dir / "features.bin", records.size());
  for (std::size_t i = 0; i < records.size(); ++i) records[i].feature = std::move(features[i]);

  DatasetSplit parts;
  {
    const std::string p = (dir / "splits.tsv").string();
    auto in = detail::open_in(p);
    const auto n = detail::read_header(in, p, "locsens-split", kSplitVersion);
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
      auto f = detail::split_view(line, '\t');
      if (f.size() != 2) throw FormatError(p + ": malformed split line '" + line + "'");
      const auto id = detail::parse_number<ImageId>(f[0], p);
      if (f[1] == "train") parts.train.push_back(id);
      else if (f[1] == "val") parts.val.push_back(id);
      else if (f[1] == "test") parts.test.push_back(id);
      else throw FormatError(p + ": unknown partition '" + std::string(f[1]) + "'");
      ++count;
    }
    if (count != n) {
      throw FormatError(p + ": header declares " + std::to_string(n) + " entries, found " +
                        std::to_string(count));
    }
  }
  return Dataset(std::move(vocab), std::move(records), std::move(parts));
}

/// Per-tag word vectors, in file order.
struct WordVectorTable {
  std::vector<std::string> labels;
  nn::Tensor<double> vectors;  // [labels.size() x dim]

  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }

  /// Rows reordered to vocabulary order; every vocabulary tag must be present.
  WordVectorTable aligned_to(const TagVocabulary& vocab) const {
    std::unordered_map<std::string, std::size_t> row;
    for (std::size_t i = 0; i < labels.size(); ++i) row.emplace(labels[i], i);
    nn::Tensor<double> out(static_cast<nn::Index>(vocab.size()), vectors.cols());
    for (std::size_t t = 0; t < vocab.size(); ++t) {
      auto it = row.find(vocab.labels()[t]);
      if (it == row.end()) {
        throw ValidationError("word vector table lacks tag " + vocab.labels()[t]);
      }
      out.row(static_cast<nn::Index>(t)) = vectors.row(static_cast<nn::Index>(it->second));
    }
    return {vocab.labels(), std::move(out)};
  }
};

/// Text format: "H D" header, then "label v1 ... vD" per line.
inline void save_word_vectors(const std::filesystem::path& path, const WordVectorTable& table) {
  auto out = detail::open_out(path);
  out << table.labels.size() << ' ' << table.dim() << '\n';
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    if (table.labels[i].find_first_of(" \t\n") != std::string::npos) {
      throw ValidationError("word vector label contains whitespace: " + table.labels[i]);
    }
    out << table.labels[i];
    for (nn::Index j = 0; j < table.vectors.cols(); ++j) {
      out << ' ' << detail::format_exact(table.vectors(static_cast<nn::Index>(i), j));
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

inline WordVectorTable load_word_vectors(const std::filesystem::path& path) {
  const std::string p = path.string();
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(p + ": missing 'H D' header");
  auto head = detail::split_view(line, ' ');
  if (head.size() != 2) throw FormatError(p + ": header must be 'H D'");
  const auto h = detail::parse_number<std::size_t>(head[0], p);
  const auto d = detail::parse_number<std::size_t>(head[1], p);
  WordVectorTable table;
  table.vectors.resize(static_cast<nn::Index>(h), static_cast<nn::Index>(d));
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string where = p + ":" + std::to_string(row + 2);
    auto f = detail::split_view(line, ' ');
    if (f.size() != d + 1) {
      throw FormatError(where + ": expected " + std::to_string(d + 1) + " fields, got " +
                        std::to_string(f.size()));
    }
    if (row >= h) throw FormatError(p + ": more rows than the declared " + std::to_string(h));
    table.labels.emplace_back(f[0]);
    for (std::size_t j = 0; j < d; ++j) {
      table.vectors(static_cast<nn::Index>(row), static_cast<nn::Index>(j)) =
          detail::parse_number<double>(f[j + 1], where);
    }
    ++row;
  }
  if (row != h) {
    throw FormatError(p + ": header declares " + std::to_string(h) + " rows, found " +
                      std::to_string(row));
  }
  return table;
}

}  // namespace locsens::data
