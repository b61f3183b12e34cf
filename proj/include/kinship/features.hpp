#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kinship/dataset.hpp"
#include "kinship/errors.hpp"

namespace kinship {

/// Per-image input feature vectors keyed by image id. Holds either synthetic
/// oracle features or embeddings produced offline by an external face backbone.
///
/// Text format:
///   kinship-features 1 <dim>
///   <image_id>\t<v0> <v1> ... <v(dim-1)>
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return features_.size(); }
  bool contains(const std::string& image_id) const { return features_.count(image_id) != 0; }

  const std::vector<double>& at(const std::string& image_id) const {
    auto it = features_.find(image_id);
    if (it == features_.end()) throw ValidationError("no feature vector for image '" + image_id + "'");
    return it->second;
  }

  void set(const std::string& image_id, std::vector<double> v) {
    if (v.size() != dim_) {
      throw DomainError("feature for '" + image_id + "' has dimension " + std::to_string(v.size()) +
                        ", store dimension is " + std::to_string(dim_));
    }
    features_[image_id] = std::move(v);
  }

  const std::map<std::string, std::vector<double>>& entries() const noexcept { return features_; }

  /// One row per dataset image, in Dataset::images() order.
  Eigen::MatrixXf matrix_for(const Dataset& data) const {
    Eigen::MatrixXf m(static_cast<Eigen::Index>(data.images().size()), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < data.images().size(); ++i) {
      const auto& v = at(data.image(i).image_id);
      for (std::size_t d = 0; d < dim_; ++d) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = static_cast<float>(v[d]);
      }
    }
    return m;
  }

  void write(std::ostream& out) const {
    out << "kinship-features 1 " << dim_ << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& [id, v] : features_) {
      out << id << '\t';
      for (std::size_t d = 0; d < v.size(); ++d) out << (d ? " " : "") << v[d];
      out << '\n';
    }
  }

  static FeatureStore read(std::istream& in) {
    std::string magic;
    int version = 0;
    std::size_t dim = 0;
    std::string header;
    if (!std::getline(in, header)) throw ParseError("features: empty file");
    std::istringstream hs(header);
    if (!(hs >> magic >> version >> dim) || magic != "kinship-features" || version != 1 || dim == 0) {
      throw ParseError("features: bad header '" + header + "'");
    }
    FeatureStore store(dim);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::blank(line)) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw ParseError("features line " + std::to_string(line_no) + ": missing tab after image id");
      }
      std::vector<double> v;
      v.reserve(dim);
      std::istringstream vs(line.substr(tab + 1));
      double x = 0;
      while (vs >> x) v.push_back(x);
      if (!vs.eof() || v.size() != dim) {
        throw ParseError("features line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                         " numbers");
      }
      store.set(line.substr(0, tab), std::move(v));
    }
    return store;
  }

  static FeatureStore load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open features file '" + path + "'");
    return read(in);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write features file '" + path + "'");
    write(out);
  }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> features_;
};

}  // namespace kinship
