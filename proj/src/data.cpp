#include "opendg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "opendg/errors.hpp"
#include "opendg/format.hpp"

namespace opendg {

bool LabelSetSpec::is_open(int raw_class) const {
  return std::find(target_open.begin(), target_open.end(), raw_class) !=
         target_open.end();
}

int LabelSetSpec::index_of(int raw_class) const {
  auto it = to_index.find(raw_class);
  if (it != to_index.end()) return it->second;
  if (is_open(raw_class)) return kOpenClass;
  throw DataError("LabelSetSpec: class id " + std::to_string(raw_class) +
                  " is neither in the union label set nor declared open");
}

void LabelSetSpec::finalize() {
  if (sources.empty()) {
    throw ConfigError("LabelSetSpec: need at least one source domain");
  }
  std::set<int> uni;
  for (const auto& dom : sources) {
    if (dom.empty()) {
      throw ConfigError("LabelSetSpec: a source domain has an empty class list");
    }
    uni.insert(dom.begin(), dom.end());
  }
  union_classes.assign(uni.begin(), uni.end());
  to_index.clear();
  for (std::size_t i = 0; i < union_classes.size(); ++i) {
    to_index[union_classes[i]] = static_cast<int>(i);
  }
  for (int c : target_known) {
    if (!uni.count(c)) {
      throw ConfigError("LabelSetSpec: target known class " + std::to_string(c) +
                        " is not in the union of source label sets");
    }
  }
  for (int c : target_open) {
    if (uni.count(c)) {
      throw ConfigError("LabelSetSpec: open class " + std::to_string(c) +
                        " collides with the union label set");
    }
  }
}

LabelSetSpec LabelSetSpec::from_json(const nlohmann::json& j) {
  LabelSetSpec spec;
  try {
    spec.sources = j.at("sources").get<std::vector<std::vector<int>>>();
    spec.target_known = j.at("target_known").get<std::vector<int>>();
    spec.target_open = j.at("target_open").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("label-set spec: " + std::string(e.what()));
  }
  spec.finalize();
  return spec;
}

nlohmann::json LabelSetSpec::to_json() const {
  return {{"sources", sources},
          {"target_known", target_known},
          {"target_open", target_open}};
}

LabelSetSpec LabelSetSpec::pacs_style() {
  LabelSetSpec spec;
  spec.sources = {{3, 0, 1}, {4, 0, 2}, {5, 1, 2}};
  spec.target_known = {0, 1, 2, 3, 4, 5};
  spec.target_open = {6};
  spec.finalize();
  return spec;
}

void SyntheticSpec::validate() const {
  if (n_domains < 1 || classes_total < 1 || input_dim < 1 || samples_per_class < 1) {
    throw ConfigError("SyntheticSpec: all counts must be at least 1");
  }
  if (prototype_scale < 0 || domain_shift_scale < 0 || noise_scale < 0) {
    throw ConfigError("SyntheticSpec: scales must be nonnegative");
  }
  if (static_cast<int>(labels.num_domains()) != n_domains) {
    throw ConfigError("SyntheticSpec: label spec has " +
                      std::to_string(labels.num_domains()) + " domains, expected " +
                      std::to_string(n_domains));
  }
  auto check_ids = [&](const std::vector<int>& ids) {
    for (int c : ids) {
      if (c < 0 || c >= classes_total) {
        throw ConfigError("SyntheticSpec: class id " + std::to_string(c) +
                          " outside [0, classes_total)");
      }
    }
  };
  for (const auto& dom : labels.sources) check_ids(dom);
  check_ids(labels.target_known);
  check_ids(labels.target_open);
}

namespace {

// Gram-Schmidt on columns. The input here is I + scale*G, so columns are
// independent for any reasonable scale; at scale 0 the output is exactly I.
Matrix orthonormalize(const Matrix& a) {
  Matrix q = a;
  const std::size_t n = a.rows;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q.at(i, k) * q.at(i, j);
      for (std::size_t i = 0; i < n; ++i) q.at(i, j) -= dot * q.at(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q.at(i, j) * q.at(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      throw NumericError("generate_synthetic: degenerate domain mix matrix");
    }
    for (std::size_t i = 0; i < n; ++i) q.at(i, j) /= norm;
  }
  return q;
}

constexpr std::uint64_t kSynthTag = 0x73796e7468ULL;

Dataset make_domain(const SyntheticSpec& spec, const Matrix& prototypes,
                    const std::vector<int>& class_list, int domain_index,
                    Rng& rng) {
  const std::size_t dim = static_cast<std::size_t>(spec.input_dim);
  Matrix mix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) mix.at(i, i) = 1.0;
  for (auto& v : mix.data) v += spec.domain_shift_scale * rng.normal();
  const Matrix q = orthonormalize(mix);
  std::vector<double> shift(dim);
  for (auto& v : shift) v = spec.domain_shift_scale * rng.normal();

  const std::size_t n = class_list.size() * spec.samples_per_class;
  Dataset data;
  data.domain_index = domain_index;
  data.features = Matrix(n, dim);
  data.labels = Matrix(n, spec.labels.num_classes());
  data.class_index.reserve(n);
  data.raw_class.reserve(n);
  std::size_t row = 0;
  for (int raw : class_list) {
    const int idx = spec.labels.index_of(raw);
    for (int k = 0; k < spec.samples_per_class; ++k, ++row) {
      double* out = data.features.row_ptr(row);
      for (std::size_t i = 0; i < dim; ++i) {
        double v = shift[i];
        for (std::size_t jj = 0; jj < dim; ++jj) {
          v += q.at(i, jj) * prototypes.at(static_cast<std::size_t>(raw), jj);
        }
        out[i] = v + spec.noise_scale * rng.normal();
      }
      data.raw_class.push_back(raw);
      data.class_index.push_back(idx);
      if (idx != kOpenClass) {
        data.labels.at(row, static_cast<std::size_t>(idx)) = 1.0;
      }
    }
  }
  return data;
}

}  // namespace

std::pair<std::vector<Dataset>, Dataset> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t dim = static_cast<std::size_t>(spec.input_dim);
  Rng proto_rng(derive_seed(spec.seed, kSynthTag, 0));
  Matrix prototypes(static_cast<std::size_t>(spec.classes_total), dim);
  for (auto& v : prototypes.data) v = spec.prototype_scale * proto_rng.normal();

  std::vector<Dataset> sources;
  sources.reserve(spec.labels.num_domains());
  for (std::size_t d = 0; d < spec.labels.num_domains(); ++d) {
    Rng rng(derive_seed(spec.seed, kSynthTag, 1 + d));
    sources.push_back(make_domain(spec, prototypes, spec.labels.sources[d],
                                  static_cast<int>(d), rng));
  }
  std::vector<int> target_classes = spec.labels.target_known;
  target_classes.insert(target_classes.end(), spec.labels.target_open.begin(),
                        spec.labels.target_open.end());
  Rng target_rng(derive_seed(spec.seed, kSynthTag, 1 + spec.labels.num_domains()));
  Dataset target = make_domain(spec, prototypes, target_classes,
                               static_cast<int>(spec.labels.num_domains()), target_rng);
  return {std::move(sources), std::move(target)};
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot write " + path);
  out << "domain,class";
  for (std::size_t j = 0; j < data.features.cols; ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.domain_index << "," << data.raw_class[i];
    for (std::size_t j = 0; j < data.features.cols; ++j) {
      out << "," << format_double(data.features.at(i, j));
    }
    out << "\n";
  }
}

Dataset load_csv(const std::string& path, const LabelSetSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("load_csv: " + path + " is empty");
  }
  if (line.rfind("domain,class", 0) != 0) {
    throw ParseError("load_csv: " + path + ":1: expected header 'domain,class,f0,...'");
  }
  const std::size_t width = static_cast<std::size_t>(
      std::count(line.begin(), line.end(), ',') - 1);
  if (width == 0) {
    throw ParseError("load_csv: " + path + ":1: header declares no feature columns");
  }

  std::vector<double> values;
  std::vector<int> raw_classes;
  int domain = -1;
  std::size_t line_no = 1;
  const int max_domain = static_cast<int>(spec.num_domains());  // target index
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (cells.size() != width + 2) {
      throw ParseError("load_csv: " + where + "expected " +
                       std::to_string(width + 2) + " fields, got " +
                       std::to_string(cells.size()));
    }
    auto parse_int = [&](const std::string& s) {
      int v = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError("load_csv: " + where + "non-integer field '" + s + "'");
      }
      return v;
    };
    const int row_domain = parse_int(cells[0]);
    if (row_domain < 0 || row_domain > max_domain) {
      throw ParseError("load_csv: " + where + "unknown domain index " +
                       std::to_string(row_domain));
    }
    if (domain == -1) {
      domain = row_domain;
    } else if (row_domain != domain) {
      throw ParseError("load_csv: " + where + "mixed domain indices in one file");
    }
    const int raw = parse_int(cells[1]);
    if (row_domain < max_domain && spec.is_open(raw)) {
      throw ParseError("load_csv: " + where + "open class " + std::to_string(raw) +
                       " in source domain");
    }
    spec.index_of(raw);  // validates membership, throws DataError otherwise
    raw_classes.push_back(raw);
    for (std::size_t j = 0; j < width; ++j) {
      const std::string& s = cells[2 + j];
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError("load_csv: " + where + "non-numeric field '" + s + "'");
      }
      values.push_back(v);
    }
  }
  if (raw_classes.empty()) {
    throw DataError("load_csv: " + path + " has no data rows");
  }
  Dataset data;
  data.domain_index = domain;
  data.features = Matrix(raw_classes.size(), width);
  data.features.data = std::move(values);
  data.labels = Matrix(raw_classes.size(), spec.num_classes());
  data.raw_class = std::move(raw_classes);
  data.class_index.reserve(data.raw_class.size());
  for (std::size_t i = 0; i < data.raw_class.size(); ++i) {
    const int idx = spec.index_of(data.raw_class[i]);
    data.class_index.push_back(idx);
    if (idx != kOpenClass) {
      data.labels.at(i, static_cast<std::size_t>(idx)) = 1.0;
    }
  }
  return data;
}

Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.domain_index = data.domain_index;
  out.features = Matrix(rows.size(), data.features.cols);
  out.labels = Matrix(rows.size(), data.labels.cols);
  out.class_index.reserve(rows.size());
  out.raw_class.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::copy(data.features.row_ptr(r), data.features.row_ptr(r) + data.features.cols,
              out.features.row_ptr(i));
    std::copy(data.labels.row_ptr(r), data.labels.row_ptr(r) + data.labels.cols,
              out.labels.row_ptr(i));
    out.class_index.push_back(data.class_index[r]);
    out.raw_class.push_back(data.raw_class[r]);
  }
  return out;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& data, double fraction,
                                             std::uint64_t seed) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw ConfigError("split_validation: fraction must lie in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[data.class_index[i]].push_back(i);
  }
  Rng rng(derive_seed(seed, 0x73706c6974ULL, static_cast<std::uint64_t>(data.domain_index)));
  std::vector<std::size_t> train_rows, val_rows;
  for (auto& [cls, rows] : by_class) {
    if (rows.size() < 2) {
      throw DataError("split_validation: class " + std::to_string(cls) +
                      " has fewer than 2 samples");
    }
    rng.shuffle(rows);
    const std::size_t n_val = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(rows.size())));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_val ? val_rows : train_rows).push_back(rows[i]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  return {take_rows(data, train_rows), take_rows(data, val_rows)};
}

BatchIterator::BatchIterator(const std::vector<Dataset>* datasets, int batch_size,
                             std::uint64_t seed)
    : datasets_(datasets),
      batch_size_(batch_size),
      rng_(derive_seed(seed, 0x6261746368ULL)) {
  if (batch_size_ < 1) throw ConfigError("BatchIterator: batch_size must be >= 1");
  if (datasets_->empty()) throw DataError("BatchIterator: no domains");
  std::size_t min_size = SIZE_MAX;
  for (const auto& d : *datasets_) {
    if (d.size() == 0) throw DataError("BatchIterator: empty domain dataset");
    min_size = std::min(min_size, d.size());
  }
  steps_per_epoch_ = (min_size + static_cast<std::size_t>(batch_size_) - 1) /
                     static_cast<std::size_t>(batch_size_);
  order_.resize(datasets_->size());
  cursor_.assign(datasets_->size(), 0);
  for (std::size_t d = 0; d < datasets_->size(); ++d) reshuffle(d);
}

void BatchIterator::reshuffle(std::size_t domain) {
  auto& order = order_[domain];
  order.resize((*datasets_)[domain].size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng_.shuffle(order);
  cursor_[domain] = 0;
}

std::vector<FeatureBatch> BatchIterator::next() {
  std::vector<FeatureBatch> batches;
  batches.reserve(datasets_->size());
  for (std::size_t d = 0; d < datasets_->size(); ++d) {
    std::vector<std::size_t> rows;
    rows.reserve(static_cast<std::size_t>(batch_size_));
    while (rows.size() < static_cast<std::size_t>(batch_size_)) {
      if (cursor_[d] == order_[d].size()) reshuffle(d);
      rows.push_back(order_[d][cursor_[d]++]);
    }
    batches.push_back(take_rows((*datasets_)[d], rows));
  }
  return batches;
}

}  // namespace opendg
