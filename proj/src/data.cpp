#include "dlglm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dlglm::data {

namespace {

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

std::size_t Schema::width() const {
  std::size_t w = 0;
  for (const auto& f : features) w += f.width();
  return w;
}

std::size_t Schema::n_continuous() const {
  return static_cast<std::size_t>(std::count_if(features.begin(), features.end(),
                                                [](const Feature& f) { return f.kind == FeatureKind::continuous; }));
}

void Schema::layout() {
  std::size_t col = 0;
  for (auto& f : features)
    if (f.kind == FeatureKind::continuous) f.column = col++;
  for (auto& f : features) {
    if (f.kind == FeatureKind::categorical) {
      if (f.levels.size() < 2) throw std::invalid_argument("categorical feature " + f.name + " needs >= 2 levels");
      f.column = col;
      col += f.levels.size();
    }
  }
}

Schema Schema::all_continuous(std::size_t p, glm::Family family) {
  Schema s;
  for (std::size_t j = 0; j < p; ++j) s.features.push_back({"x" + std::to_string(j + 1), FeatureKind::continuous, {}, 0});
  s.family = family;
  if (family.kind == glm::FamilyKind::bernoulli) s.response_levels = {"0", "1"};
  s.layout();
  return s;
}

Matrix Dataset::feature_mask() const {
  Matrix M(X.rows(), static_cast<Eigen::Index>(schema.n_features()));
  for (std::size_t f = 0; f < schema.n_features(); ++f) M.col(f) = R.col(schema.features[f].column);
  return M;
}

std::vector<std::size_t> Dataset::missing_prone_features() const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < schema.n_features(); ++f) {
    if ((R.col(schema.features[f].column).array() == 0.0).any()) out.push_back(f);
  }
  return out;
}

std::vector<std::size_t> Dataset::rows(Split s) const {
  if (split.empty()) throw std::logic_error("dataset has no split assignment");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d;
  d.schema = schema;
  d.truth = truth;
  d.scaling = scaling;
  const auto m = static_cast<Eigen::Index>(idx.size());
  d.X.resize(m, X.cols());
  d.R.resize(m, R.cols());
  d.y.resize(m);
  if (has_truth_x()) d.X_true.resize(m, X_true.cols());
  if (p_true.size() > 0) d.p_true.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto i = static_cast<Eigen::Index>(idx[k]);
    d.X.row(k) = X.row(i);
    d.R.row(k) = R.row(i);
    d.y(k) = y(i);
    if (has_truth_x()) d.X_true.row(k) = X_true.row(i);
    if (p_true.size() > 0) d.p_true(k) = p_true(i);
    if (!split.empty()) d.split.push_back(split[idx[k]]);
  }
  return d;
}

void Dataset::validate() const {
  const std::size_t w = schema.width();
  if (static_cast<std::size_t>(X.cols()) != w || R.cols() != X.cols() || R.rows() != X.rows()) {
    throw std::invalid_argument("Dataset: X/R shapes disagree with the schema");
  }
  if (y.size() != X.rows()) throw std::invalid_argument("Dataset: y length differs from row count");
  if (!split.empty() && split.size() != n()) throw std::invalid_argument("Dataset: split length differs from row count");
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (!std::isfinite(y(i))) throw UnsupportedConfiguration("missing responses are not supported");
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double r = R(i, j);
      if (r != 0.0 && r != 1.0) throw std::invalid_argument("Dataset: mask entries must be 0 or 1");
      if (r == 1.0 && !std::isfinite(X(i, j))) throw std::invalid_argument("Dataset: observed entry is not finite");
    }
  }
  for (const auto& f : schema.features) {
    for (std::size_t c = 1; c < f.width(); ++c) {
      if (R.col(f.column + c) != R.col(f.column)) {
        throw std::invalid_argument("Dataset: one-hot block of " + f.name + " has a mixed mask");
      }
    }
  }
}

void SimConfig::validate() const {
  if (p == 0 || d == 0 || d > p) throw std::invalid_argument("SimConfig: need 1 <= d <= p");
  if (n < 10 * p) throw std::invalid_argument("SimConfig: need n >= 10 p");
  if (!(w_sd > 0.0) || !(b_sd > 0.0)) throw std::invalid_argument("SimConfig: scales must be positive");
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n", c.n},   {"p", c.p},
          {"d", c.d},   {"B0", c.B0},
          {"beta_value", c.beta_value},
          {"random_sign_beta", c.random_sign_beta},
          {"w_sd", c.w_sd},
          {"b_sd", c.b_sd},
          {"seed", c.seed}};
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.n = j.value("n", c.n);
  c.p = j.value("p", c.p);
  c.d = j.value("d", c.d);
  c.B0 = j.value("B0", c.B0);
  c.beta_value = j.value("beta_value", c.beta_value);
  c.random_sign_beta = j.value("random_sign_beta", c.random_sign_beta);
  c.w_sd = j.value("w_sd", c.w_sd);
  c.b_sd = j.value("b_sd", c.b_sd);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Matrix normalize_columns(const Matrix& M) {
  if (M.rows() < 2) throw std::invalid_argument("normalize_columns: need at least two rows");
  Matrix out(M.rows(), M.cols());
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    const double mean = M.col(j).mean();
    const double var = (M.col(j).array() - mean).square().sum() / static_cast<double>(M.rows() - 1);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) throw std::invalid_argument("normalize_columns: constant column");
    out.col(j) = (M.col(j).array() - mean) / sd;
  }
  return out;
}

Dataset simulate_xy(const SimConfig& c, Rng& rng) {
  c.validate();
  const auto n = static_cast<Eigen::Index>(c.n), p = static_cast<Eigen::Index>(c.p),
             d = static_cast<Eigen::Index>(c.d);
  std::normal_distribution<double> n01;
  Matrix Z(n, d), W(d, p), B(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < d; ++l) Z(i, l) = n01(rng);
  for (Eigen::Index l = 0; l < d; ++l)
    for (Eigen::Index j = 0; j < p; ++j) W(l, j) = c.w_sd * n01(rng);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) B(i, j) = c.b_sd * n01(rng);
  Matrix X = normalize_columns(Z * W + B);
  X.array() += c.B0;

  Vector beta = Vector::Constant(p, c.beta_value);
  if (c.random_sign_beta) {
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index j = 0; j < p; ++j) beta(j) = coin(rng) ? c.beta_value : -c.beta_value;
  }
  const Vector lin = X * beta;
  auto mean_prob = [&](double b0) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += logistic(b0 + lin(i));
    return s / static_cast<double>(n);
  };
  double lo = -lin.cwiseAbs().maxCoeff() - 50.0, hi = -lo;
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < 0.5 ? lo : hi) = mid;
  }
  const double beta0 = 0.5 * (lo + hi);

  Dataset ds;
  ds.schema = Schema::all_continuous(c.p, glm::Family::bernoulli());
  ds.X = X;
  ds.X_true = X;
  ds.R = Matrix::Ones(n, p);
  ds.p_true.resize(n);
  ds.y.resize(n);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.p_true(i) = logistic(beta0 + lin(i));
    ds.y(i) = u01(rng) < ds.p_true(i) ? 1.0 : 0.0;
  }
  ds.truth = {true, beta, beta0};
  return ds;
}

void split_811(Dataset& ds, Rng& rng) {
  const std::size_t n = ds.n();
  if (n < 10) throw std::invalid_argument("split_811: need at least 10 rows");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_train = (8 * n) / 10, n_valid = n / 10;
  ds.split.assign(n, Split::test);
  for (std::size_t k = 0; k < n_train; ++k) ds.split[perm[k]] = Split::train;
  for (std::size_t k = n_train; k < n_train + n_valid; ++k) ds.split[perm[k]] = Split::valid;
}

void apply_feature_mask(Dataset& ds, const Matrix& fm) {
  if (fm.rows() != ds.X.rows() || static_cast<std::size_t>(fm.cols()) != ds.schema.n_features()) {
    throw std::invalid_argument("apply_feature_mask: mask shape mismatch");
  }
  if (!ds.has_truth_x()) ds.X_true = ds.X;
  ds.R.resize(ds.X.rows(), ds.X.cols());
  for (std::size_t f = 0; f < ds.schema.n_features(); ++f) {
    const Feature& feat = ds.schema.features[f];
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
      const double r = fm(i, f);
      if (r != 0.0 && r != 1.0) throw std::invalid_argument("apply_feature_mask: entries must be 0 or 1");
      // Entries without a known value stay masked.
      const bool known = std::isfinite(ds.X_true(i, feat.column));
      for (std::size_t c = 0; c < feat.width(); ++c) {
        ds.R(i, feat.column + c) = known ? r : 0.0;
        ds.X(i, feat.column + c) = r == 0.0 || !known ? kMissing : ds.X_true(i, feat.column + c);
      }
    }
  }
}

Matrix source_matrix(const Dataset& ds) {
  const Matrix& X = ds.has_truth_x() ? ds.X_true : ds.X;
  Matrix S(X.rows(), static_cast<Eigen::Index>(ds.schema.n_features()));
  for (std::size_t f = 0; f < ds.schema.n_features(); ++f) {
    const Feature& feat = ds.schema.features[f];
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (feat.kind == FeatureKind::continuous) {
        S(i, f) = X(i, feat.column);
      } else if (!std::isfinite(X(i, feat.column))) {
        S(i, f) = kMissing;
      } else {
        Eigen::Index k;
        X.row(i).segment(feat.column, feat.width()).maxCoeff(&k);
        S(i, f) = static_cast<double>(k);
      }
    }
  }
  return S;
}

Matrix preimpute_zero(const Matrix& X, const Matrix& R) {
  if (X.rows() != R.rows() || X.cols() != R.cols()) throw std::invalid_argument("preimpute_zero: shape mismatch");
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) out(i, j) = R(i, j) == 1.0 ? X(i, j) : 0.0;
  return out;
}

void standardize(Dataset& ds) {
  const std::vector<std::size_t> train = ds.rows(Split::train);
  const std::size_t w = ds.schema.width();
  Standardizer s;
  s.shift.assign(w, 0.0);
  s.scale.assign(w, 1.0);
  for (const auto& f : ds.schema.features) {
    if (f.kind != FeatureKind::continuous) continue;
    const std::size_t j = f.column;
    double sum = 0.0, sq = 0.0;
    std::size_t k = 0;
    for (std::size_t i : train) {
      if (ds.R(i, j) != 1.0) continue;
      sum += ds.X(i, j);
      ++k;
    }
    if (k == 0) throw std::invalid_argument("standardize: feature " + f.name + " has no observed training values");
    const double mean = sum / static_cast<double>(k);
    for (std::size_t i : train)
      if (ds.R(i, j) == 1.0) sq += (ds.X(i, j) - mean) * (ds.X(i, j) - mean);
    const double sd = k > 1 ? std::sqrt(sq / static_cast<double>(k - 1)) : 0.0;
    s.shift[j] = mean;
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      if (ds.R(i, j) == 1.0) ds.X(i, j) = s.forward(j, ds.X(i, j));
      if (ds.has_truth_x() && std::isfinite(ds.X_true(i, j))) ds.X_true(i, j) = s.forward(j, ds.X_true(i, j));
    }
  }
  ds.scaling = std::move(s);
}

// --- CSV -------------------------------------------------------------------

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started && !field.empty()) {
          throw std::runtime_error("csv: unexpected quote on line " + std::to_string(line));
        }
        quoted = true;
        field_started = true;
        break;
      case ',': end_field(); break;
      case '\r': break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (records.empty()) throw std::runtime_error("csv: no header row");
  CsvTable t;
  t.header = std::move(records.front());
  for (auto& h : t.header) h = trim(h);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw std::runtime_error("csv: ragged row " + std::to_string(r + 1) + " has " +
                               std::to_string(records[r].size()) + " fields, header has " +
                               std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << quote(fields[i]);
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

void write_matrix_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& M) {
  if (header.size() != static_cast<std::size_t>(M.cols())) throw std::invalid_argument("write_matrix_csv: header width");
  CsvTable t;
  t.header = header;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    std::vector<std::string> row(M.cols());
    for (Eigen::Index j = 0; j < M.cols(); ++j) row[j] = format_number(M(i, j));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

Matrix read_matrix_csv(const std::string& path, std::vector<std::string>* header) {
  CsvTable t = read_csv(path);
  Matrix M(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      const std::string f = trim(t.rows[i][j]);
      double v;
      if (f.empty() || f == "NA") v = kMissing;
      else if (!parse_double(f, v)) throw std::runtime_error(path + ": non-numeric field '" + f + "'");
      M(i, j) = v;
    }
  }
  if (header) *header = t.header;
  return M;
}

nlohmann::json to_json(const CsvSchema& s) {
  return {{"response", s.response},
          {"categorical", s.categorical},
          {"na_tokens", s.na_tokens},
          {"sentinels", s.sentinels},
          {"family", s.family}};
}

CsvSchema csv_schema_from_json(const nlohmann::json& j) {
  CsvSchema s;
  s.response = j.at("response").get<std::string>();
  s.categorical = j.value("categorical", s.categorical);
  s.na_tokens = j.value("na_tokens", s.na_tokens);
  s.sentinels = j.value("sentinels", s.sentinels);
  s.family = j.value("family", s.family);
  return s;
}

Dataset ingest_table(const CsvTable& table, const CsvSchema& cs) {
  const auto resp_it = std::find(table.header.begin(), table.header.end(), cs.response);
  if (resp_it == table.header.end()) throw std::invalid_argument("ingest: no response column '" + cs.response + "'");
  const std::size_t resp_col = static_cast<std::size_t>(resp_it - table.header.begin());
  for (const auto& c : cs.categorical) {
    if (std::find(table.header.begin(), table.header.end(), c) == table.header.end()) {
      throw std::invalid_argument("ingest: unknown categorical column '" + c + "'");
    }
  }
  const std::size_t n = table.rows.size();
  if (n == 0) throw std::invalid_argument("ingest: no data rows");

  auto is_na = [&](std::size_t col, const std::string& raw) {
    const std::string v = trim(raw);
    if (std::find(cs.na_tokens.begin(), cs.na_tokens.end(), v) != cs.na_tokens.end()) return true;
    auto it = cs.sentinels.find(table.header[col]);
    return it != cs.sentinels.end() && std::find(it->second.begin(), it->second.end(), v) != it->second.end();
  };

  Schema schema;
  schema.response = cs.response;
  std::vector<std::size_t> source_col;  // table column of each feature
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == resp_col) continue;
    Feature f;
    f.name = table.header[c];
    bool numeric = true;
    std::set<std::string> levels;
    for (const auto& row : table.rows) {
      if (is_na(c, row[c])) continue;
      double v;
      if (!parse_double(row[c], v)) numeric = false;
      levels.insert(trim(row[c]));
    }
    const bool listed = std::find(cs.categorical.begin(), cs.categorical.end(), f.name) != cs.categorical.end();
    if (listed || !numeric) {
      f.kind = FeatureKind::categorical;
      f.levels.assign(levels.begin(), levels.end());
      if (numeric) {
        std::sort(f.levels.begin(), f.levels.end(), [](const std::string& a, const std::string& b) {
          return std::stod(a) < std::stod(b);
        });
      }
    }
    schema.features.push_back(std::move(f));
    source_col.push_back(c);
  }
  schema.layout();

  // Response.
  std::vector<std::string> yraw(n);
  bool y_numeric = true;
  std::set<std::string> ylevels;
  for (std::size_t i = 0; i < n; ++i) {
    yraw[i] = trim(table.rows[i][resp_col]);
    if (is_na(resp_col, yraw[i])) {
      throw UnsupportedConfiguration("response '" + cs.response + "' is missing on data row " + std::to_string(i + 1) +
                                     "; missing responses are not supported");
    }
    double v;
    if (!parse_double(yraw[i], v)) y_numeric = false;
    ylevels.insert(yraw[i]);
  }
  std::string fam = cs.family;
  if (fam == "auto") {
    if (y_numeric && ylevels.size() > 2) fam = "gaussian";
    else if (ylevels.size() == 2) fam = "bernoulli";
    else if (ylevels.size() >= 3) fam = "categorical";
    else throw std::invalid_argument("ingest: response has a single value");
  }
  Vector y(n);
  if (fam == "gaussian") {
    if (!y_numeric) throw std::invalid_argument("ingest: gaussian response must be numeric");
    schema.family = glm::Family::gaussian();
    for (std::size_t i = 0; i < n; ++i) parse_double(yraw[i], y(i));
  } else {
    std::vector<std::string> lv(ylevels.begin(), ylevels.end());
    if (y_numeric) {
      std::sort(lv.begin(), lv.end(), [](const std::string& a, const std::string& b) { return std::stod(a) < std::stod(b); });
    }
    if (fam == "bernoulli") {
      if (lv.size() != 2) throw std::invalid_argument("ingest: bernoulli response needs exactly 2 levels");
      schema.family = glm::Family::bernoulli();
    } else if (fam == "categorical") {
      if (lv.size() < 3) throw std::invalid_argument("ingest: categorical response needs >= 3 levels");
      schema.family = glm::Family::categorical(lv.size());
    } else {
      throw std::invalid_argument("ingest: unknown family '" + fam + "'");
    }
    schema.response_levels = lv;
    for (std::size_t i = 0; i < n; ++i) {
      y(i) = static_cast<double>(std::find(lv.begin(), lv.end(), yraw[i]) - lv.begin());
    }
  }

  Dataset ds;
  ds.schema = schema;
  ds.y = y;
  const auto w = static_cast<Eigen::Index>(schema.width());
  ds.X = Matrix::Zero(static_cast<Eigen::Index>(n), w);
  ds.R = Matrix::Ones(static_cast<Eigen::Index>(n), w);
  for (std::size_t f = 0; f < schema.n_features(); ++f) {
    const Feature& feat = schema.features[f];
    const std::size_t c = source_col[f];
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& raw = table.rows[i][c];
      if (is_na(c, raw)) {
        for (std::size_t k = 0; k < feat.width(); ++k) {
          ds.X(i, feat.column + k) = kMissing;
          ds.R(i, feat.column + k) = 0.0;
        }
      } else if (feat.kind == FeatureKind::continuous) {
        parse_double(raw, ds.X(i, feat.column));
      } else {
        const auto lvl = std::find(feat.levels.begin(), feat.levels.end(), trim(raw)) - feat.levels.begin();
        ds.X(i, feat.column + lvl) = 1.0;
      }
    }
  }
  ds.validate();
  return ds;
}

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) { return ingest_table(read_csv(path), schema); }

nlohmann::json schema_to_json(const Schema& s) {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : s.features) {
    feats.push_back({{"name", f.name},
                     {"kind", f.kind == FeatureKind::continuous ? "continuous" : "categorical"},
                     {"levels", f.levels},
                     {"column", f.column}});
  }
  return {{"features", feats},
          {"response", s.response},
          {"family", glm::to_string(s.family.kind)},
          {"classes", s.family.class_count},
          {"response_levels", s.response_levels}};
}

Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  for (const auto& f : j.at("features")) {
    Feature feat;
    feat.name = f.at("name").get<std::string>();
    feat.kind = f.at("kind").get<std::string>() == "categorical" ? FeatureKind::categorical : FeatureKind::continuous;
    feat.levels = f.value("levels", std::vector<std::string>{});
    s.features.push_back(std::move(feat));
  }
  s.response = j.value("response", std::string("y"));
  const auto kind = glm::family_from_string(j.at("family").get<std::string>());
  const auto classes = j.value("classes", std::size_t{2});
  s.family = kind == glm::FamilyKind::gaussian      ? glm::Family::gaussian()
             : kind == glm::FamilyKind::bernoulli ? glm::Family::bernoulli()
                                                    : glm::Family::categorical(classes);
  s.response_levels = j.value("response_levels", std::vector<std::string>{});
  s.layout();
  return s;
}

nlohmann::json manifest(const Dataset& ds) {
  nlohmann::json j;
  j["schema"] = schema_to_json(ds.schema);
  j["n"] = ds.n();
  std::vector<std::string> split;
  for (auto s : ds.split) split.push_back(to_string(s));
  j["split"] = split;
  if (!ds.scaling.empty()) j["scaling"] = {{"shift", ds.scaling.shift}, {"scale", ds.scaling.scale}};
  if (ds.truth.known) {
    j["truth"] = {{"beta", std::vector<double>(ds.truth.beta.data(), ds.truth.beta.data() + ds.truth.beta.size())},
                  {"beta0", ds.truth.beta0}};
  }
  return j;
}

}  // namespace dlglm::data
