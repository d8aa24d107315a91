#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "slfpca/bspline.hpp"
#include "slfpca/errors.hpp"

namespace slfpca {

/// One subject's irregularly timed binary record.
struct SubjectRecord {
  std::string id;
  std::vector<double> times;
  std::vector<int> outcomes;
};

/// Binary functional observations (t_ij, y_ij), subject-major.
class BinaryFunctionalDataset {
 public:
  BinaryFunctionalDataset() = default;

  BinaryFunctionalDataset(double domain_end, std::vector<SubjectRecord> subjects)
      : domain_end_(domain_end), subjects_(std::move(subjects)) {
    if (!(domain_end_ > 0.0)) throw InvalidArgument("dataset: T must be positive");
    offsets_.assign(1, 0);
    for (const auto& s : subjects_) {
      if (s.times.empty()) throw DataError("subject '" + s.id + "' has no observations");
      if (s.times.size() != s.outcomes.size())
        throw DataError("subject '" + s.id + "' has mismatched times/outcomes");
      for (std::size_t j = 0; j < s.times.size(); ++j) {
        if (s.outcomes[j] != 0 && s.outcomes[j] != 1)
          throw DataError("subject '" + s.id + "': outcome must be 0 or 1");
        if (!std::isfinite(s.times[j]) || s.times[j] < 0.0 || s.times[j] > domain_end_)
          throw DataError("subject '" + s.id + "': time " + std::to_string(s.times[j]) +
                          " outside [0, " + std::to_string(domain_end_) + "]");
      }
      offsets_.push_back(offsets_.back() + s.times.size());
    }
  }

  double domain_end() const noexcept { return domain_end_; }
  /// n.
  std::size_t subject_count() const noexcept { return subjects_.size(); }
  /// N = sum_i m_i.
  std::size_t total_count() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  /// m_i.
  std::size_t count(std::size_t i) const { return subjects_.at(i).times.size(); }
  const SubjectRecord& subject(std::size_t i) const { return subjects_.at(i); }
  const std::vector<SubjectRecord>& subjects() const noexcept { return subjects_; }
  /// Flat index of observation (i, 0).
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }

  /// q_ij = 2 y_ij - 1.
  int signed_outcome(std::size_t i, std::size_t j) const { return 2 * subjects_[i].outcomes[j] - 1; }

  /// All q_ij stacked subject-major.
  Vector signed_outcomes() const {
    Vector q(total_count());
    std::size_t r = 0;
    for (const auto& s : subjects_)
      for (int y : s.outcomes) q[r++] = 2.0 * y - 1.0;
    return q;
  }

 private:
  double domain_end_ = 1.0;
  std::vector<SubjectRecord> subjects_;
  std::vector<std::size_t> offsets_{0};
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

}  // namespace detail

/// Reads `subject,time,y` (header required). Subjects keep first-appearance order;
/// within a subject, rows keep file order.
inline BinaryFunctionalDataset read_csv(std::istream& in, double domain_end) {
  if (!(domain_end > 0.0)) throw InvalidArgument("load_csv: T must be positive");
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 3 || cols[0] != "subject" || cols[1] != "time" || cols[2] != "y")
      throw DataError("expected header 'subject,time,y'", line_no);
    have_header = true;
    break;
  }
  if (!have_header) throw DataError("empty file");

  std::vector<SubjectRecord> subjects;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 3) throw DataError("expected 3 columns, found " + std::to_string(cols.size()), line_no);
    if (cols[0].empty()) throw DataError("empty subject id", line_no);
    double t = 0.0;
    if (!detail::parse_double(cols[1], t) || !std::isfinite(t))
      throw DataError("malformed time '" + cols[1] + "'", line_no);
    if (t < 0.0 || t > domain_end)
      throw DataError("time " + cols[1] + " outside [0, " + std::to_string(domain_end) + "]", line_no);
    int y = 0;
    if (cols[2] == "0") {
      y = 0;
    } else if (cols[2] == "1") {
      y = 1;
    } else {
      throw DataError("invalid outcome '" + cols[2] + "' (must be 0 or 1)", line_no);
    }
    auto [it, inserted] = index.try_emplace(cols[0], subjects.size());
    if (inserted) subjects.push_back(SubjectRecord{cols[0], {}, {}});
    subjects[it->second].times.push_back(t);
    subjects[it->second].outcomes.push_back(y);
  }
  if (subjects.empty()) throw DataError("no observations after header");
  return BinaryFunctionalDataset(domain_end, std::move(subjects));
}

inline BinaryFunctionalDataset load_csv(const std::string& path, double domain_end) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, domain_end);
}

/// Writes the same schema read_csv accepts; times carry 17 significant digits.
inline void write_csv(std::ostream& out, const BinaryFunctionalDataset& data) {
  out << "subject,time,y\n";
  out << std::setprecision(17);
  for (const auto& s : data.subjects())
    for (std::size_t j = 0; j < s.times.size(); ++j) out << s.id << ',' << s.times[j] << ',' << s.outcomes[j] << '\n';
}

inline void write_csv(const std::string& path, const BinaryFunctionalDataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv(out, data);
}

/// Basis rows B_ij for every observation plus per-subject cross products.
///
/// Rows are stored densely (N x L, subject-major) together with the index of the
/// first of the d + 1 potentially non-zero columns, so per-observation work stays
/// O(d) while the dense matrix remains available to callers that want it.
class DesignCache {
 public:
  DesignCache(const BinaryFunctionalDataset& data, const BSplineBasis& basis)
      : basis_size_(basis.size()), width_(basis.degree() + 1) {
    if (std::abs(data.domain_end() - basis.domain_end()) > 1e-12 * basis.domain_end())
      throw InvalidArgument("build_design: dataset domain [0, " + std::to_string(data.domain_end()) +
                            "] differs from basis domain [0, " + std::to_string(basis.domain_end()) + "]");
    const std::size_t n = data.subject_count();
    const std::size_t total = data.total_count();
    rows_ = Matrix::Zero(total, basis_size_);
    first_.resize(total);
    offsets_.resize(n + 1);
    subject_grams_.reserve(n);
    std::vector<double> local(width_);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      offsets_[i] = r;
      Matrix g = Matrix::Zero(basis_size_, basis_size_);
      for (double t : data.subject(i).times) {
        const int first = basis.eval_local(t, 0, local);
        first_[r] = first;
        for (int a = 0; a < width_; ++a) {
          rows_(r, first + a) = local[a];
          for (int b = 0; b < width_; ++b) g(first + a, first + b) += local[a] * local[b];
        }
        ++r;
      }
      subject_grams_.push_back(std::move(g));
    }
    offsets_[n] = r;
    cross_ = Matrix::Zero(basis_size_, basis_size_);
    for (const auto& g : subject_grams_) cross_ += g;
  }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(rows_.rows()); }
  int basis_size() const noexcept { return basis_size_; }
  int band_width() const noexcept { return width_; }
  std::size_t subject_count() const noexcept { return subject_grams_.size(); }
  std::size_t begin(std::size_t i) const { return offsets_.at(i); }
  std::size_t end(std::size_t i) const { return offsets_.at(i + 1); }

  /// Stacked N x L design B.
  const Matrix& matrix() const noexcept { return rows_; }
  auto row(std::size_t r) const { return rows_.row(static_cast<Eigen::Index>(r)); }
  int first_nonzero(std::size_t r) const { return first_[r]; }

  /// sum_j B_ij B_ij^T.
  const Matrix& subject_gram(std::size_t i) const { return subject_grams_.at(i); }
  /// B^T B.
  const Matrix& cross_product() const noexcept { return cross_; }

  /// B_r^T c using only the band.
  double dot(std::size_t r, const Eigen::Ref<const Vector>& c) const {
    const int f = first_[r];
    double v = 0.0;
    for (int a = 0; a < width_; ++a) v += rows_(r, f + a) * c[f + a];
    return v;
  }

  /// acc += w * B_r.
  void axpy(std::size_t r, double w, Eigen::Ref<Vector> acc) const {
    const int f = first_[r];
    for (int a = 0; a < width_; ++a) acc[f + a] += w * rows_(r, f + a);
  }

  /// B^T v for an N-vector v.
  Vector transpose_times(const Eigen::Ref<const Vector>& v) const {
    if (static_cast<std::size_t>(v.size()) != rows()) throw InvalidArgument("design: vector length must equal N");
    Vector out = Vector::Zero(basis_size_);
    for (std::size_t r = 0; r < rows(); ++r) axpy(r, v[r], out);
    return out;
  }

 private:
  int basis_size_;
  int width_;
  Matrix rows_;
  std::vector<int> first_;
  std::vector<std::size_t> offsets_;
  std::vector<Matrix> subject_grams_;
  Matrix cross_;
};

}  // namespace slfpca
