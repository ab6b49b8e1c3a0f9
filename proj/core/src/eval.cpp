#include "extabs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

using json = nlohmann::json;

json parse_meta(const std::string& meta_json) {
  if (meta_json.empty()) return json::object();
  json j = json::parse(meta_json, nullptr, false);
  if (j.is_discarded()) throw DataError("invalid meta json: " + meta_json);
  return j;
}

std::vector<std::string> string_list(const json& j, const char* field, int line) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw DataError("summaries line " + std::to_string(line) + ": missing array '" + field + "'");
  }
  std::vector<std::string> out;
  for (const json& v : j[field]) {
    if (!v.is_string()) {
      throw DataError("summaries line " + std::to_string(line) + ": non-string in '" + field +
                      "'");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<int> int_list(const json& j, const char* field, int line) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw DataError("summaries line " + std::to_string(line) + ": missing array '" + field + "'");
  }
  std::vector<int> out;
  for (const json& v : j[field]) {
    if (!v.is_number_integer()) {
      throw DataError("summaries line " + std::to_string(line) + ": non-integer in '" + field +
                      "'");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

std::vector<double> double_list(const json& j, const char* field, int line) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw DataError("summaries line " + std::to_string(line) + ": missing array '" + field + "'");
  }
  std::vector<double> out;
  for (const json& v : j[field]) {
    if (!v.is_number()) {
      throw DataError("summaries line " + std::to_string(line) + ": non-number in '" + field +
                      "'");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

// Continued fraction for the incomplete beta function, modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 3e-15) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

RougeScore mean_of(const std::vector<RougeScore>& scores) {
  RougeScore m;
  for (const RougeScore& s : scores) {
    m.rouge1 += s.rouge1;
    m.rouge2 += s.rouge2;
    m.rougeL += s.rougeL;
  }
  const double n = static_cast<double>(scores.size());
  m.rouge1 /= n;
  m.rouge2 /= n;
  m.rougeL /= n;
  return m;
}

}  // namespace

void save_summaries(const std::string& path, const std::vector<DocumentSummary>& summaries,
                    const std::string& meta_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write summaries file: " + path);
  json meta;
  meta["_meta"] = parse_meta(meta_json);
  out << meta.dump() << '\n';
  for (const DocumentSummary& s : summaries) {
    json rec;
    rec["id"] = s.id;
    rec["extractive"] = s.extractive;
    rec["abstractive"] = s.abstractive;
    rec["mask_segments"] = s.mask_segments;
    rec["scores"] = s.scores;
    out << rec.dump() << '\n';
  }
}

std::vector<DocumentSummary> load_summaries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read summaries file: " + path);
  std::vector<DocumentSummary> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError("summaries line " + std::to_string(lineno) + ": invalid json");
    }
    if (j.contains("_meta")) continue;
    DocumentSummary s;
    if (!j.contains("id") || !j["id"].is_string()) {
      throw DataError("summaries line " + std::to_string(lineno) + ": missing id");
    }
    s.id = j["id"].get<std::string>();
    s.extractive = string_list(j, "extractive", lineno);
    if (!j.contains("abstractive") || !j["abstractive"].is_string()) {
      throw DataError("summaries line " + std::to_string(lineno) + ": missing abstractive");
    }
    s.abstractive = j["abstractive"].get<std::string>();
    s.mask_segments = int_list(j, "mask_segments", lineno);
    s.scores = double_list(j, "scores", lineno);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> extract_segments(const SegmentedDocument& doc,
                                          const std::vector<int>& indices) {
  std::vector<std::string> out;
  for (int s : indices) {
    if (s < 0 || s >= static_cast<int>(doc.segments.size())) {
      throw std::invalid_argument("extract_segments: segment " + std::to_string(s) +
                                  " outside document '" + doc.id + "'");
    }
    out.push_back(join_tokens(doc.segments[s]));
  }
  return out;
}

EvalReport evaluate_run(const std::vector<DocumentSummary>& outputs,
                        const std::vector<SegmentedDocument>& references) {
  if (references.empty()) throw DataError("evaluate_run: no reference documents");
  std::unordered_map<std::string, const DocumentSummary*> by_id;
  for (const DocumentSummary& s : outputs) {
    if (!by_id.emplace(s.id, &s).second) {
      throw DataError("evaluate_run: duplicate output id '" + s.id + "'");
    }
  }
  std::string missing, surplus;
  for (const SegmentedDocument& ref : references) {
    if (by_id.find(ref.id) == by_id.end()) missing += (missing.empty() ? "" : ", ") + ref.id;
  }
  {
    std::unordered_map<std::string, int> ref_ids;
    for (const SegmentedDocument& ref : references) ref_ids.emplace(ref.id, 0);
    for (const DocumentSummary& s : outputs) {
      if (ref_ids.find(s.id) == ref_ids.end()) surplus += (surplus.empty() ? "" : ", ") + s.id;
    }
  }
  if (!missing.empty() || !surplus.empty()) {
    std::string msg = "evaluate_run: outputs do not match references";
    if (!missing.empty()) msg += "; missing ids: " + missing;
    if (!surplus.empty()) msg += "; surplus ids: " + surplus;
    throw DataError(msg);
  }

  EvalReport report;
  for (const SegmentedDocument& ref : references) {
    const DocumentSummary& out = *by_id.at(ref.id);
    report.ids.push_back(ref.id);
    std::vector<std::string> extract_toks;
    for (const std::string& seg : out.extractive) {
      std::vector<std::string> toks = split_tokens(seg);
      extract_toks.insert(extract_toks.end(), toks.begin(), toks.end());
    }
    report.extractive.push_back(rouge_all(extract_toks, ref.summary));
    report.abstractive.push_back(rouge_all(split_tokens(out.abstractive), ref.summary));
  }
  report.extractive_mean = mean_of(report.extractive);
  report.abstractive_mean = mean_of(report.abstractive);
  return report;
}

SweepResult mask_source_sweep(const ExtAbsModel& model, const Vocabulary& vocab,
                              const std::vector<SegmentedDocument>& docs,
                              const std::vector<OracleAnnotation>* annotations,
                              const std::vector<MaskSource>& sources, const InferParams& params) {
  if (docs.empty()) throw std::invalid_argument("mask_source_sweep: no documents");
  if (annotations != nullptr && annotations->size() != docs.size()) {
    throw std::invalid_argument("mask_source_sweep: " + std::to_string(annotations->size()) +
                                " annotations for " + std::to_string(docs.size()) + " documents");
  }
  SweepResult result;
  for (MaskSource source : sources) {
    if (source == MaskSource::oracle && annotations == nullptr) {
      throw std::invalid_argument("mask_source_sweep: oracle source needs annotations");
    }
    std::vector<DocumentSummary> outputs;
    outputs.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const OracleAnnotation* ann =
          source == MaskSource::oracle ? &(*annotations)[i] : nullptr;
      SummaryResult r = summarize_document(model, vocab, docs[i], source, ann, params);
      DocumentSummary s;
      s.id = docs[i].id;
      s.extractive = extract_segments(docs[i], r.extract_indices);
      s.abstractive = join_tokens(r.abstractive);
      s.mask_segments = r.mask_segments;
      s.scores = r.scores;
      outputs.push_back(std::move(s));
    }
    EvalReport report = evaluate_run(outputs, docs);
    report.mask_source = to_string(source);
    report.top_k = params.top_k;
    report.top_z = params.top_z;
    result.reports.push_back(std::move(report));
    result.outputs.push_back(std::move(outputs));
  }
  return result;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int dof) {
  if (dof < 1) throw std::invalid_argument("student t: dof must be >= 1");
  const double v = static_cast<double>(dof);
  const double tail = 0.5 * regularized_incomplete_beta(v / 2.0, 0.5, v / (v + t * t));
  return t >= 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                          double alpha) {
  const int n = static_cast<int>(a.size());
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired t-test: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " samples");
  }
  if (n < 2) throw std::invalid_argument("paired t-test: need at least 2 pairs");

  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= n - 1;

  TTestResult r;
  r.dof = n - 1;
  if (var == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 0.5;
    } else if (mean > 0.0) {
      r.t = std::numeric_limits<double>::infinity();
      r.p = 0.0;
    } else {
      r.t = -std::numeric_limits<double>::infinity();
      r.p = 1.0;
    }
  } else {
    r.t = mean / std::sqrt(var / n);
    r.p = 1.0 - student_t_cdf(r.t, r.dof);
  }
  r.significant = r.p < alpha;
  return r;
}

}  // namespace extabs
