#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kinship/errors.hpp"
#include "kinship/relationship.hpp"

namespace kinship {

struct ImageRecord {
  std::string image_id;
  std::string source;  // file path, or a synthetic locator
  std::size_t person = 0;
};

struct Individual {
  std::string person_id;
  std::string family_id;
  std::vector<std::size_t> images;  // indices into Dataset::images()
};

/// A listed blood relation between two individuals of one family. Indices refer
/// to the owning Dataset.
struct KinPair {
  std::size_t person1 = 0;
  std::size_t person2 = 0;
  std::string family_id;
  Relationship relationship = Relationship::BB;

  friend bool operator==(const KinPair&, const KinPair&) = default;
};

/// Families, individuals, their images and the listed kin pairs. Kinship is
/// extensional: only pairs in pairs() are positives, even within one family.
class Dataset {
 public:
  const std::vector<Individual>& individuals() const noexcept { return individuals_; }
  const std::vector<ImageRecord>& images() const noexcept { return images_; }
  const std::vector<KinPair>& pairs() const noexcept { return pairs_; }

  const Individual& individual(std::size_t i) const { return individuals_.at(i); }
  const ImageRecord& image(std::size_t i) const { return images_.at(i); }
  const std::string& family_of_image(std::size_t image) const {
    return individuals_.at(images_.at(image).person).family_id;
  }

  std::optional<std::size_t> find_person(std::string_view person_id) const {
    auto it = person_index_.find(std::string(person_id));
    if (it == person_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> find_image(std::string_view image_id) const {
    auto it = image_index_.find(std::string(image_id));
    if (it == image_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Returns the existing index if the person is known; a family conflict is a ValidationError.
  std::size_t add_individual(const std::string& person_id, const std::string& family_id) {
    if (auto found = find_person(person_id)) {
      const auto& existing = individuals_[*found];
      if (existing.family_id != family_id) {
        throw ValidationError("person '" + person_id + "' listed in families '" + existing.family_id +
                              "' and '" + family_id + "'");
      }
      return *found;
    }
    individuals_.push_back(Individual{person_id, family_id, {}});
    person_index_.emplace(person_id, individuals_.size() - 1);
    return individuals_.size() - 1;
  }

  std::size_t add_image(std::size_t person, const std::string& image_id, const std::string& source) {
    if (person >= individuals_.size()) throw ValidationError("image '" + image_id + "' for unknown person");
    if (find_image(image_id)) throw ValidationError("duplicate image id '" + image_id + "'");
    images_.push_back(ImageRecord{image_id, source, person});
    image_index_.emplace(image_id, images_.size() - 1);
    individuals_[person].images.push_back(images_.size() - 1);
    return images_.size() - 1;
  }

  void add_pair(std::size_t person1, std::size_t person2, const std::string& family_id, Relationship rel) {
    KinPair pair{person1, person2, family_id, rel};
    check_pair(pair);
    pairs_.push_back(std::move(pair));
  }

  void check_pair(const KinPair& pair) const {
    if (pair.person1 >= individuals_.size() || pair.person2 >= individuals_.size()) {
      throw ValidationError("kin pair references an unknown individual");
    }
    const auto& a = individuals_[pair.person1];
    const auto& b = individuals_[pair.person2];
    if (pair.person1 == pair.person2) {
      throw ValidationError("kin pair joins '" + a.person_id + "' with itself");
    }
    if (a.family_id != pair.family_id || b.family_id != pair.family_id) {
      throw ValidationError("cross-family kin pair: '" + a.person_id + "' (" + a.family_id + ") and '" +
                            b.person_id + "' (" + b.family_id + ") listed under family '" +
                            pair.family_id + "'");
    }
  }

  /// Full invariant audit: every individual has an image, every pair is same-family.
  void validate() const {
    for (const auto& person : individuals_) {
      if (person.images.empty()) {
        throw ValidationError("person '" + person.person_id + "' has no images");
      }
    }
    for (const auto& pair : pairs_) check_pair(pair);
  }

  std::set<std::string> families() const {
    std::set<std::string> out;
    for (const auto& p : individuals_) out.insert(p.family_id);
    return out;
  }

  /// The listed pairs whose family satisfies `keep`.
  template <class Predicate>
  std::vector<KinPair> pairs_where(Predicate keep) const {
    std::vector<KinPair> out;
    for (const auto& pair : pairs_) {
      if (keep(pair.family_id)) out.push_back(pair);
    }
    return out;
  }

 private:
  std::vector<Individual> individuals_;
  std::vector<ImageRecord> images_;
  std::vector<KinPair> pairs_;
  std::unordered_map<std::string, std::size_t> person_index_;
  std::unordered_map<std::string, std::size_t> image_index_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                          : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool blank(std::string_view line) { return trim(line).empty(); }

}  // namespace detail

inline constexpr std::string_view kIndexHeader = "person1,person2,family,relationship";
inline constexpr std::string_view kManifestHeader = "person,image_path";

/// Reads a pair index (header `person1,person2,family,relationship`) and its
/// image manifest (`person,image_path`, header optional). Image ids are the
/// manifest paths. Manifest rows for people absent from the index are ignored.
inline Dataset read_pair_index(std::istream& index, std::istream& manifest) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;

  bool header_seen = false;
  while (std::getline(index, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    auto cols = detail::split_csv(line);
    if (!header_seen) {
      std::string joined;
      for (std::size_t i = 0; i < cols.size(); ++i) joined += (i ? "," : "") + cols[i];
      if (joined != kIndexHeader) {
        throw ParseError("index line " + std::to_string(line_no) + ": expected header '" +
                         std::string(kIndexHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (cols.size() != 4) {
      throw ParseError("index line " + std::to_string(line_no) + ": expected 4 columns, got " +
                       std::to_string(cols.size()));
    }
    for (const auto& c : cols) {
      if (c.empty()) throw ParseError("index line " + std::to_string(line_no) + ": empty field");
    }
    Relationship rel;
    try {
      rel = parse_relationship(cols[3]);
    } catch (const ParseError& e) {
      throw ParseError("index line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      // A person's family is fixed by the first row naming them; a second
      // family for the same person makes the row a cross-family pair.
      auto p1 = data.find_person(cols[0]) ? *data.find_person(cols[0]) : data.add_individual(cols[0], cols[2]);
      auto p2 = data.find_person(cols[1]) ? *data.find_person(cols[1]) : data.add_individual(cols[1], cols[2]);
      data.add_pair(p1, p2, cols[2], rel);
    } catch (const ValidationError& e) {
      throw ValidationError("index line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) throw ParseError("index: missing header row");

  line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    auto cols = detail::split_csv(line);
    if (line_no == 1 && cols.size() == 2 && cols[0] == "person" && cols[1] == "image_path") continue;
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected 'person,image_path'");
    }
    auto person = data.find_person(cols[0]);
    if (!person) continue;
    try {
      data.add_image(*person, cols[1], cols[1]);
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  data.validate();
  return data;
}

inline Dataset load_pair_index(const std::string& index_path, const std::string& manifest_path) {
  std::ifstream index(index_path);
  if (!index) throw ConfigError("cannot open pair index '" + index_path + "'");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw ConfigError("cannot open image manifest '" + manifest_path + "'");
  return read_pair_index(index, manifest);
}

inline void write_pair_index(std::ostream& out, const Dataset& data, const std::vector<KinPair>& pairs) {
  out << kIndexHeader << '\n';
  for (const auto& p : pairs) {
    out << data.individual(p.person1).person_id << ',' << data.individual(p.person2).person_id << ','
        << p.family_id << ',' << to_string(p.relationship) << '\n';
  }
}

inline void write_manifest(std::ostream& out, const Dataset& data) {
  out << kManifestHeader << '\n';
  for (const auto& img : data.images()) {
    out << data.individual(img.person).person_id << ',' << img.image_id << '\n';
  }
}

struct DatasetStats {
  std::size_t families = 0;
  std::size_t individuals = 0;
  std::size_t images = 0;
  std::size_t pairs = 0;
  std::map<Relationship, std::size_t> pairs_per_type;
};

inline DatasetStats compute_stats(const Dataset& data) {
  DatasetStats s;
  s.families = data.families().size();
  s.individuals = data.individuals().size();
  s.images = data.images().size();
  s.pairs = data.pairs().size();
  for (const auto& p : data.pairs()) ++s.pairs_per_type[p.relationship];
  return s;
}

inline std::ostream& operator<<(std::ostream& out, const DatasetStats& s) {
  out << "families     " << s.families << '\n'
      << "individuals  " << s.individuals << '\n'
      << "images       " << s.images << '\n'
      << "pairs        " << s.pairs << '\n';
  for (auto rel : kAllRelationships) {
    auto it = s.pairs_per_type.find(rel);
    out << "  " << to_string(rel) << std::string(6 - to_string(rel).size(), ' ')
        << (it == s.pairs_per_type.end() ? 0 : it->second) << '\n';
  }
  return out;
}

}  // namespace kinship
