#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lwsep/hungarian.hpp"
#include "lwsep/tile.hpp"

namespace lwsep::eval {

struct MetricsReport {
  int num_classes = 2;
  /// confusion[gt][assigned prediction]; rows are ground truth.
  std::vector<std::vector<std::uint64_t>> confusion;
  /// Points per ground-truth class whose predicted label matched no class.
  std::vector<std::uint64_t> unassigned;
  std::uint64_t evaluated = 0;
  double oacc = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  std::vector<double> class_accuracy;  // NaN when the class is absent from ground truth
  std::vector<double> iou;             // NaN when the class is absent from both
  /// Predicted label -> ground-truth class (-1 when unmatched).
  std::map<std::uint32_t, int> assignment;
  Warnings warnings;
};

enum class Matching {
  kHungarian,  // predicted labels matched to classes by maximum overlap
  kIdentity,   // predicted label c means class c
};

/// Metrics after matching predicted labels to ground-truth classes.
/// Ground-truth points labeled 255 are excluded.
inline MetricsReport compute_metrics(std::span<const std::uint8_t> gt, std::span<const std::uint32_t> pred,
                                     int num_classes = 2, Matching matching = Matching::kHungarian) {
  if (gt.size() != pred.size()) throw Error("compute_metrics: label arrays differ in length");
  MetricsReport r;
  r.num_classes = num_classes;
  std::map<std::uint32_t, int> pred_index;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kUnlabeled) continue;
    if (gt[i] >= num_classes) throw Error("compute_metrics: ground-truth label out of range");
    pred_index.emplace(pred[i], 0);
  }
  int next = 0;
  for (auto& [label, idx] : pred_index) idx = next++;
  Eigen::MatrixXd inter = Eigen::MatrixXd::Zero(next, num_classes);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kUnlabeled) continue;
    inter(pred_index[pred[i]], gt[i]) += 1.0;
  }
  const auto assign = hungarian_assign(inter);
  for (const auto& [label, idx] : pred_index) {
    if (matching == Matching::kHungarian) {
      r.assignment[label] = assign[idx];
    } else {
      r.assignment[label] = label < static_cast<std::uint32_t>(num_classes) ? static_cast<int>(label) : -1;
    }
  }

  r.confusion.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  r.unassigned.assign(num_classes, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kUnlabeled) continue;
    ++r.evaluated;
    const int mapped = r.assignment[pred[i]];
    if (mapped < 0) {
      ++r.unassigned[gt[i]];
    } else {
      ++r.confusion[gt[i]][mapped];
    }
  }
  if (r.evaluated == 0) throw Error("compute_metrics: no labeled points to evaluate");

  std::uint64_t correct = 0;
  int acc_classes = 0, iou_classes = 0;
  r.class_accuracy.assign(num_classes, std::nan(""));
  r.iou.assign(num_classes, std::nan(""));
  for (int c = 0; c < num_classes; ++c) {
    std::uint64_t n_c = r.unassigned[c], p_c = 0;
    for (int k = 0; k < num_classes; ++k) {
      n_c += r.confusion[c][k];
      p_c += r.confusion[k][c];
    }
    const auto tp = r.confusion[c][c];
    correct += tp;
    if (n_c > 0) {
      r.class_accuracy[c] = static_cast<double>(tp) / static_cast<double>(n_c);
      r.macc += r.class_accuracy[c];
      ++acc_classes;
    } else {
      r.warnings.add("class " + std::to_string(c) + " absent from ground truth; excluded from mAcc");
    }
    const auto uni = n_c + p_c - tp;
    if (uni > 0) {
      r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
      r.miou += r.iou[c];
      ++iou_classes;
    }
  }
  r.oacc = static_cast<double>(correct) / static_cast<double>(r.evaluated);
  r.macc = acc_classes ? r.macc / acc_classes : std::nan("");
  r.miou = iou_classes ? r.miou / iou_classes : std::nan("");
  return r;
}

inline MetricsReport compute_metrics(std::span<const std::uint8_t> gt, std::span<const std::uint8_t> pred,
                                     int num_classes = 2, Matching matching = Matching::kHungarian) {
  std::vector<std::uint32_t> p(pred.begin(), pred.end());
  return compute_metrics(gt, std::span<const std::uint32_t>(p), num_classes, matching);
}

}  // namespace lwsep::eval
