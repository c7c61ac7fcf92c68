#include "rolefuse/eval.hpp"

#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rolefuse/conll.hpp"
#include "rolefuse/error.hpp"

namespace rolefuse::eval {

using nlohmann::json;

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<std::string> role_classes() {
  std::vector<std::string> c;
  for (Role r : kAllRoles) c.emplace_back(role_name(r));
  return c;
}

}  // namespace

EvalReport report_from_confusion(std::vector<std::string> classes,
                                 std::vector<std::vector<std::size_t>> confusion) {
  const std::size_t n = classes.size();
  if (n < kNumRoles || confusion.size() != n) throw DataError("malformed confusion matrix");
  for (const auto& row : confusion) {
    if (row.size() != n) throw DataError("confusion matrix must be square");
  }
  EvalReport rep;
  rep.classes = std::move(classes);
  rep.confusion = std::move(confusion);
  std::size_t diag = 0;
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t p = 0; p < n; ++p) rep.total += rep.confusion[g][p];
    diag += rep.confusion[g][g];
  }
  rep.accuracy = ratio(diag, rep.total);
  for (std::size_t r = 0; r < kNumRoles; ++r) {
    std::size_t gold = 0;
    std::size_t pred = 0;
    for (std::size_t k = 0; k < n; ++k) {
      gold += rep.confusion[r][k];
      pred += rep.confusion[k][r];
    }
    ClassScores& s = rep.per_role[r];
    s.support = gold;
    s.precision = ratio(rep.confusion[r][r], pred);
    s.recall = ratio(rep.confusion[r][r], gold);
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    rep.macro_precision += s.precision / kNumRoles;
    rep.macro_recall += s.recall / kNumRoles;
    rep.macro_f1 += s.f1 / kNumRoles;
  }
  return rep;
}

EvalReport evaluate(const std::vector<Role>& gold, const std::vector<Role>& pred) {
  if (gold.size() != pred.size()) {
    throw DataError("gold and predicted label counts differ (" + std::to_string(gold.size()) +
                    " vs " + std::to_string(pred.size()) + ")");
  }
  if (gold.empty()) throw DataError("cannot evaluate an empty prediction set");
  std::vector<std::vector<std::size_t>> cm(kNumRoles, std::vector<std::size_t>(kNumRoles, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm[index(gold[i])][index(pred[i])];
  return report_from_confusion(role_classes(), std::move(cm));
}

EvalReport sequence_evaluate(const std::vector<std::vector<std::string>>& gold,
                             const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw DataError("gold and predicted sequence counts differ (" + std::to_string(gold.size()) +
                    " vs " + std::to_string(pred.size()) + ")");
  }
  constexpr std::size_t kOutside = kNumRoles;
  auto class_of = [](const std::string& tag, std::size_t seq, std::size_t pos) {
    auto t = conll::parse_tag(tag);
    if (!t) {
      throw DataError("sequence " + std::to_string(seq) + ", position " + std::to_string(pos) +
                      ": unknown tag '" + tag + "'");
    }
    return t->kind == conll::BioTag::Kind::kOutside ? kOutside : index(t->role);
  };
  std::vector<std::vector<std::size_t>> cm(kNumRoles + 1, std::vector<std::size_t>(kNumRoles + 1, 0));
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw DataError("sequence " + std::to_string(s) + " is misaligned (" +
                      std::to_string(gold[s].size()) + " vs " + std::to_string(pred[s].size()) +
                      " tags)");
    }
    for (std::size_t t = 0; t < gold[s].size(); ++t) {
      ++cm[class_of(gold[s][t], s, t)][class_of(pred[s][t], s, t)];
    }
  }
  auto classes = role_classes();
  classes.emplace_back("O");
  return report_from_confusion(std::move(classes), std::move(cm));
}

MajorityBaseline majority_baseline(const RoleCounts& train_counts) {
  Role best = Role::kHero;
  for (Role r : kAllRoles) {
    if (train_counts[r] > train_counts[best]) best = r;
  }
  return MajorityBaseline(best);
}

std::vector<Role> labels_from_counts(const RoleCounts& counts) {
  std::vector<Role> out;
  for (Role r : kAllRoles) out.insert(out.end(), counts[r], r);
  return out;
}

json EvalReport::to_json() const {
  json roles = json::object();
  for (Role r : kAllRoles) {
    const auto& s = per_role[index(r)];
    roles[std::string(role_name(r))] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  return json{{"classes", classes},
              {"confusion", confusion},
              {"total", total},
              {"accuracy", accuracy},
              {"per_role", std::move(roles)},
              {"macro", {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}}}};
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(10) << "Class" << std::right << std::setw(6) << "Acc"
      << std::setw(6) << "P" << std::setw(6) << "R" << std::setw(6) << "F1" << std::setw(8)
      << "Support" << '\n';
  for (Role r : kAllRoles) {
    const auto& s = per_role[index(r)];
    out << std::left << std::setw(10) << role_name(r) << std::right << std::setw(6) << "-"
        << std::setw(6) << s.precision << std::setw(6) << s.recall << std::setw(6) << s.f1
        << std::setw(8) << s.support << '\n';
  }
  out << std::left << std::setw(10) << "macro" << std::right << std::setw(6) << accuracy
      << std::setw(6) << macro_precision << std::setw(6) << macro_recall << std::setw(6)
      << macro_f1 << std::setw(8) << total << '\n';
  return out.str();
}

}  // namespace rolefuse::eval
