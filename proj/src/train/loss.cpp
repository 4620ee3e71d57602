#include "painforge/train/loss.hpp"

#include "painforge/core/errors.hpp"

namespace painforge {

void LossWeights::validate() const {
  for (double w : {pspi, au, pspi_distill, au_distill, feature_distill})
    if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

double LossTerms::weighted(const LossWeights& w) const {
  return w.pspi * pspi + w.au * au + w.pspi_distill * pspi_distill + w.au_distill * au_distill +
         w.feature_distill * feature_distill;
}

ComposedLoss compose_loss(const ModelOutput& student, const ModelOutput* teacher, std::span<const int> pspi_labels,
                          const Tensor& au_labels, const LossWeights& w) {
  w.validate();
  const std::size_t B = student.pspi_logits.size(0);
  if (pspi_labels.size() != B) {
    throw DimensionError("expected " + std::to_string(B) + " PSPI labels, got " + std::to_string(pspi_labels.size()));
  }
  if (au_labels.shape() != student.au_pred.shape()) {
    throw DimensionError("AU labels " + shape_str(au_labels.shape()) + " do not match predictions " +
                         shape_str(student.au_pred.shape()));
  }
  ComposedLoss out;
  Tensor total;
  auto accumulate = [&](double weight, const Tensor& term, double& record) {
    record = term.item();
    const Tensor scaled = scale(term, weight);
    total = total.defined() ? add(total, scaled) : scaled;
  };
  if (w.pspi > 0) accumulate(w.pspi, cross_entropy(student.pspi_logits, pspi_labels), out.terms.pspi);
  if (w.au > 0) accumulate(w.au, mse(student.au_pred, au_labels), out.terms.au);
  if (teacher) {
    if (teacher->cls_feature.shape() != student.cls_feature.shape()) {
      throw ConfigError("teacher CLS " + shape_str(teacher->cls_feature.shape()) + " cannot align with student CLS " +
                        shape_str(student.cls_feature.shape()));
    }
    if (w.pspi_distill > 0)
      accumulate(w.pspi_distill, kl_temperature(teacher->pspi_logits, student.pspi_logits, w.temperature),
                 out.terms.pspi_distill);
    if (w.au_distill > 0)
      accumulate(w.au_distill, mse(student.au_pred, teacher->au_pred.detach()), out.terms.au_distill);
    if (w.feature_distill > 0)
      accumulate(w.feature_distill, mse(student.cls_feature, teacher->cls_feature.detach()),
                 out.terms.feature_distill);
  }
  out.total = total.defined() ? total : Tensor::scalar(0.0);
  return out;
}

}  // namespace painforge
