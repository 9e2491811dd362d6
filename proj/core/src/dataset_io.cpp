#include "ibpt/dataset_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace ibpt {

namespace {

using nlohmann::json;

// Rescale only when the sum is off by more than round-off, so that
// normalizing an already-normalized vector is the identity.
template <typename Row>
void normalize_checked(Row&& row, const std::string& what) {
  CompensatedSum s;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    const double v = row(j);
    if (!std::isfinite(v) || v < 0.0) {
      std::ostringstream os;
      os << what << " entry " << j << " = " << v << " is negative or non-finite";
      throw Error(ErrorKind::kInvalidDistribution, os.str());
    }
    s += v;
  }
  const double sum = s.value();
  if (std::abs(sum - 1.0) > kLoaderSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << what << " sums to " << sum << " (tolerance " << kLoaderSumTol << ")";
    throw Error(ErrorKind::kInvalidDistribution, os.str());
  }
  if (std::abs(sum - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) row /= sum;
}

Matrix matrix_from_json(const json& j, const char* key) {
  if (!j.is_array() || j.empty()) {
    throw Error(ErrorKind::kInvalidDistribution, std::string(key) + " must be a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw Error(ErrorKind::kInvalidDistribution, std::string(key) + " rows must be non-empty arrays");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      std::ostringstream os;
      os << key << " row " << i << " has " << (j[i].is_array() ? j[i].size() : 0) << " entries, expected " << cols;
      throw Error(ErrorKind::kDimensionMismatch, os.str());
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) {
        std::ostringstream os;
        os << key << "[" << i << "][" << c << "] is not a number";
        throw Error(ErrorKind::kInvalidDistribution, os.str());
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

}  // namespace

Dataset Dataset::from_conditional(Vector px, Matrix py_given_x, std::vector<std::string> y_labels) {
  if (px.size() != py_given_x.rows()) {
    std::ostringstream os;
    os << "px has " << px.size() << " entries but py_given_x has " << py_given_x.rows() << " rows";
    throw Error(ErrorKind::kDimensionMismatch, os.str());
  }
  if (!y_labels.empty() && static_cast<Eigen::Index>(y_labels.size()) != py_given_x.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "y_labels size differs from |Y|");
  }
  normalize_checked(px, "px");
  for (Eigen::Index i = 0; i < py_given_x.rows(); ++i) {
    normalize_checked(py_given_x.row(i), "py_given_x row " + std::to_string(i));
  }
  return Dataset{std::move(px), std::move(py_given_x), std::move(y_labels)};
}

Dataset Dataset::from_joint(const Matrix& pxy) {
  Vector px(pxy.rows());
  Matrix pyx(pxy.rows(), pxy.cols());
  CompensatedSum total;
  for (Eigen::Index i = 0; i < pxy.rows(); ++i) {
    CompensatedSum s;
    for (Eigen::Index j = 0; j < pxy.cols(); ++j) {
      if (!std::isfinite(pxy(i, j)) || pxy(i, j) < 0.0) {
        std::ostringstream os;
        os << "pxy[" << i << "][" << j << "] = " << pxy(i, j) << " is negative or non-finite";
        throw Error(ErrorKind::kInvalidDistribution, os.str());
      }
      s += pxy(i, j);
    }
    px(i) = s.value();
    total += px(i);
  }
  if (std::abs(total.value() - 1.0) > kLoaderSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << "pxy sums to " << total.value() << " (tolerance " << kLoaderSumTol << ")";
    throw Error(ErrorKind::kInvalidDistribution, os.str());
  }
  for (Eigen::Index i = 0; i < pxy.rows(); ++i) {
    if (px(i) > kSupportFloor) {
      pyx.row(i) = pxy.row(i) / px(i);
    } else {
      pyx.row(i).setConstant(1.0 / static_cast<double>(pxy.cols()));
    }
  }
  return from_conditional(std::move(px), std::move(pyx));
}

Dataset dataset_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kIo, std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::kInvalidDistribution, "dataset must be a JSON object");
  std::vector<std::string> labels;
  if (j.contains("y_labels")) labels = j.at("y_labels").get<std::vector<std::string>>();
  if (j.contains("pxy")) {
    Dataset ds = Dataset::from_joint(matrix_from_json(j.at("pxy"), "pxy"));
    if (!labels.empty()) ds = Dataset::from_conditional(ds.px, ds.py_given_x, std::move(labels));
    return ds;
  }
  if (!j.contains("px") || !j.contains("py_given_x")) {
    throw Error(ErrorKind::kInvalidDistribution, "dataset needs either \"pxy\" or both \"px\" and \"py_given_x\"");
  }
  const auto& jpx = j.at("px");
  if (!jpx.is_array() || jpx.empty()) throw Error(ErrorKind::kInvalidDistribution, "px must be a non-empty array");
  Vector px(static_cast<Eigen::Index>(jpx.size()));
  for (std::size_t i = 0; i < jpx.size(); ++i) {
    if (!jpx[i].is_number()) throw Error(ErrorKind::kInvalidDistribution, "px[" + std::to_string(i) + "] is not a number");
    px(static_cast<Eigen::Index>(i)) = jpx[i].get<double>();
  }
  return Dataset::from_conditional(std::move(px), matrix_from_json(j.at("py_given_x"), "py_given_x"), std::move(labels));
}

std::string dataset_to_json(const Dataset& ds) {
  json j;
  j["px"] = std::vector<double>(ds.px.data(), ds.px.data() + ds.px.size());
  json rows = json::array();
  for (Eigen::Index i = 0; i < ds.py_given_x.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(ds.py_given_x.cols()));
    for (Eigen::Index c = 0; c < ds.py_given_x.cols(); ++c) r[static_cast<std::size_t>(c)] = ds.py_given_x(i, c);
    rows.push_back(r);
  }
  j["py_given_x"] = rows;
  if (!ds.y_labels.empty()) j["y_labels"] = ds.y_labels;
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_text_file(path)); }

void save_dataset(const std::filesystem::path& path, const Dataset& ds) { write_text_file(path, dataset_to_json(ds)); }

Dataset dataset_from_pyx_text(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (char& c : line) {
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kInvalidDistribution, "line " + std::to_string(line_no) + ": cannot parse '" + tok + "'");
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorKind::kDimensionMismatch, "line " + std::to_string(line_no) + " has " +
                                                     std::to_string(row.size()) + " columns, expected " +
                                                     std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::kInvalidDistribution, "p(y|x) table is empty");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows.front().size());
  Matrix pyx(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < c; ++k) pyx(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return Dataset::from_conditional(Vector::Constant(n, 1.0 / static_cast<double>(n)), std::move(pyx));
}

Dataset load_pyx_file(const std::filesystem::path& path) { return dataset_from_pyx_text(read_text_file(path)); }

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace ibpt
