#include "prognos/models.hpp"

#include <istream>
#include <ostream>

#include "prognos/binio.hpp"
#include "prognos/pooling.hpp"

namespace prognos {

namespace {

constexpr char kModelMagic[9] = "PRGNMODL";
constexpr std::uint32_t kModelVersion = 1;

enum ModelKindTag : std::uint32_t {
  kPooledCox = 1,
  kAttentionDT = 2,
  kClinicalAFT = 3,
  kAveraged = 4,
};

void write_standardizer(std::ostream& out, const Standardizer& s) {
  binio::write_vector(out, s.mean);
  binio::write_vector(out, s.sd);
}

Standardizer read_standardizer(std::istream& in) {
  Standardizer s;
  s.mean = binio::read_vector(in);
  s.sd = binio::read_vector(in);
  return s;
}

void write_grid(std::ostream& out, const IntervalGrid& grid) {
  binio::write_u32(out, static_cast<std::uint32_t>(grid.cut_points.size()));
  for (double c : grid.cut_points) binio::write_f64(out, c);
}

IntervalGrid read_grid(std::istream& in) {
  IntervalGrid grid;
  std::uint32_t n = binio::read_u32(in);
  grid.cut_points.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) grid.cut_points[i] = binio::read_f64(in);
  grid.validate();
  return grid;
}

void write_mlp(std::ostream& out, const Mlp& mlp) {
  binio::write_matrix(out, mlp.w1);
  binio::write_vector(out, mlp.b1);
  binio::write_matrix(out, mlp.w2);
  binio::write_vector(out, mlp.b2);
}

Mlp read_mlp(std::istream& in) {
  Mlp mlp;
  mlp.w1 = binio::read_matrix(in);
  mlp.b1 = binio::read_vector(in);
  mlp.w2 = binio::read_matrix(in);
  mlp.b2 = binio::read_vector(in);
  return mlp;
}

void write_scheme(std::ostream& out, const EncodingScheme& s) {
  binio::write_u32(out, static_cast<std::uint32_t>(s.er_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.pr_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.her2_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.t_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.n_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.idc_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.ilc_ref));
  binio::write_u32(out, static_cast<std::uint32_t>(s.race_ref));
  binio::write_u32(out, (s.include_grade ? 1u : 0u) | (s.include_race ? 2u : 0u) |
                            (s.include_oncotype ? 4u : 0u));
}

EncodingScheme read_scheme(std::istream& in) {
  EncodingScheme s;
  s.er_ref = static_cast<ReceptorStatus>(binio::read_u32(in));
  s.pr_ref = static_cast<ReceptorStatus>(binio::read_u32(in));
  s.her2_ref = static_cast<Her2Status>(binio::read_u32(in));
  s.t_ref = static_cast<TStage>(binio::read_u32(in));
  s.n_ref = static_cast<NStage>(binio::read_u32(in));
  s.idc_ref = static_cast<YesNo>(binio::read_u32(in));
  s.ilc_ref = static_cast<YesNo>(binio::read_u32(in));
  s.race_ref = static_cast<Race>(binio::read_u32(in));
  std::uint32_t flags = binio::read_u32(in);
  s.include_grade = flags & 1u;
  s.include_race = flags & 2u;
  s.include_oncotype = flags & 4u;
  return s;
}

void check_bags(const SubjectInputs& inputs, const std::string& kind) {
  if (inputs.bags.empty()) {
    std::string id = inputs.subject ? inputs.subject->subject_id : "<unknown>";
    throw ValidationError(kind + ": subject '" + id + "' has no embedding bags");
  }
}

}  // namespace

void RiskModel::save_provenance(std::ostream& out) const {
  binio::write_u32(out, static_cast<std::uint32_t>(training_datasets_.size()));
  for (const auto& id : training_datasets_) binio::write_string(out, id);
}

void RiskModel::load_provenance(std::istream& in) {
  std::uint32_t n = binio::read_u32(in);
  std::set<std::string> ids;
  for (std::uint32_t i = 0; i < n; ++i) ids.insert(binio::read_string(in));
  training_datasets_ = std::move(ids);
}

const char* to_string(PoolKind k) { return k == PoolKind::mean ? "mean" : "max"; }

double PooledCoxModel::score_bag(const EmbeddingBag& bag) const {
  Eigen::VectorXd pooled = pool_ == PoolKind::mean ? pool_mean(bag) : pool_max(bag);
  return scorer_.score(pooled);
}

double PooledCoxModel::score_subject(const SubjectInputs& inputs) const {
  check_bags(inputs, kind());
  double sum = 0.0;
  for (const auto* bag : inputs.bags) sum += score_bag(*bag);
  return sum / static_cast<double>(inputs.bags.size());
}

std::string PooledCoxModel::kind() const {
  return std::string(to_string(pool_)) + "_cox";
}

void PooledCoxModel::save(std::ostream& out) const {
  binio::write_magic(out, kModelMagic);
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, kPooledCox);
  binio::write_u32(out, static_cast<std::uint32_t>(scorer_.beta.size()));
  binio::write_u32(out, pool_ == PoolKind::mean ? 0 : 1);
  write_standardizer(out, scorer_.stats);
  binio::write_vector(out, scorer_.beta);
  save_provenance(out);
}

std::unique_ptr<PooledCoxModel> PooledCoxModel::load(std::istream& in) {
  auto model = std::make_unique<PooledCoxModel>();
  binio::read_u32(in);  // dim, implied by the vectors
  model->pool_ = binio::read_u32(in) == 0 ? PoolKind::mean : PoolKind::max;
  model->scorer_.stats = read_standardizer(in);
  model->scorer_.beta = binio::read_vector(in);
  model->load_provenance(in);
  return model;
}

double AttentionDTRiskModel::score_subject(const SubjectInputs& inputs) const {
  check_bags(inputs, kind());
  double sum = 0.0;
  for (const auto* bag : inputs.bags) sum += model_.risk_score(*bag);
  return sum / static_cast<double>(inputs.bags.size());
}

void AttentionDTRiskModel::save(std::ostream& out) const {
  binio::write_magic(out, kModelMagic);
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, kAttentionDT);
  binio::write_u32(out, static_cast<std::uint32_t>(model_.attn.v.rows()));
  write_grid(out, model_.grid);
  write_standardizer(out, model_.stats);
  binio::write_matrix(out, model_.attn.v);
  binio::write_matrix(out, model_.attn.u);
  binio::write_vector(out, model_.attn.w);
  write_mlp(out, model_.scorer);
  binio::write_f64(out, model_.horizon);
  save_provenance(out);
}

std::unique_ptr<AttentionDTRiskModel> AttentionDTRiskModel::load(std::istream& in) {
  auto model = std::make_unique<AttentionDTRiskModel>();
  binio::read_u32(in);  // dim
  model->model_.grid = read_grid(in);
  model->model_.stats = read_standardizer(in);
  model->model_.attn.v = binio::read_matrix(in);
  model->model_.attn.u = binio::read_matrix(in);
  model->model_.attn.w = binio::read_vector(in);
  model->model_.scorer = read_mlp(in);
  model->model_.horizon = binio::read_f64(in);
  model->load_provenance(in);
  return model;
}

double ClinicalAFTModel::score_subject(const SubjectInputs& inputs) const {
  if (!inputs.subject) throw ValidationError("clinical_aft: missing subject record");
  return model_.risk(encode_covariates(inputs.subject->clinical, scheme_));
}

void ClinicalAFTModel::save(std::ostream& out) const {
  binio::write_magic(out, kModelMagic);
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, kClinicalAFT);
  binio::write_u32(out, static_cast<std::uint32_t>(model_.beta.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(model_.dist));
  write_scheme(out, scheme_);
  binio::write_vector(out, model_.beta);
  binio::write_f64(out, model_.intercept);
  binio::write_f64(out, model_.sigma);
  binio::write_u32(out, model_.flagged ? 1 : 0);
  binio::write_string(out, model_.flag_reason);
  save_provenance(out);
}

std::unique_ptr<ClinicalAFTModel> ClinicalAFTModel::load(std::istream& in) {
  auto model = std::make_unique<ClinicalAFTModel>();
  binio::read_u32(in);  // dim
  model->model_.dist = static_cast<AFTDist>(binio::read_u32(in));
  model->scheme_ = read_scheme(in);
  model->model_.beta = binio::read_vector(in);
  model->model_.intercept = binio::read_f64(in);
  model->model_.sigma = binio::read_f64(in);
  model->model_.flagged = binio::read_u32(in) != 0;
  model->model_.flag_reason = binio::read_string(in);
  model->load_provenance(in);
  return model;
}

AveragedRiskModel::AveragedRiskModel(std::vector<std::shared_ptr<const RiskModel>> parts)
    : parts_(std::move(parts)) {
  if (parts_.empty()) throw ValidationError("averaged model: no parts");
  std::set<std::string> ids;
  for (const auto& part : parts_)
    ids.insert(part->training_datasets().begin(), part->training_datasets().end());
  set_training_datasets(std::move(ids));
}

double AveragedRiskModel::score_subject(const SubjectInputs& inputs) const {
  double sum = 0.0;
  for (const auto& part : parts_) sum += part->score_subject(inputs);
  return sum / static_cast<double>(parts_.size());
}

void AveragedRiskModel::save(std::ostream& out) const {
  binio::write_magic(out, kModelMagic);
  binio::write_u32(out, kModelVersion);
  binio::write_u32(out, kAveraged);
  binio::write_u32(out, static_cast<std::uint32_t>(parts_.size()));
  for (const auto& part : parts_) part->save(out);
  save_provenance(out);
}

std::unique_ptr<AveragedRiskModel> AveragedRiskModel::load(std::istream& in) {
  std::uint32_t count = binio::read_u32(in);
  std::vector<std::shared_ptr<const RiskModel>> parts;
  for (std::uint32_t i = 0; i < count; ++i) parts.push_back(load_risk_model(in));
  auto model = std::make_unique<AveragedRiskModel>(std::move(parts));
  model->load_provenance(in);
  return model;
}

std::unique_ptr<RiskModel> load_risk_model(std::istream& in) {
  binio::expect_magic(in, kModelMagic, "model");
  std::uint32_t version = binio::read_u32(in);
  if (version != kModelVersion)
    throw ValidationError("unsupported model version " + std::to_string(version));
  std::uint32_t kind = binio::read_u32(in);
  switch (kind) {
    case kPooledCox: return PooledCoxModel::load(in);
    case kAttentionDT: return AttentionDTRiskModel::load(in);
    case kClinicalAFT: return ClinicalAFTModel::load(in);
    case kAveraged: return AveragedRiskModel::load(in);
    default: throw ValidationError("unknown model kind tag " + std::to_string(kind));
  }
}

}  // namespace prognos
