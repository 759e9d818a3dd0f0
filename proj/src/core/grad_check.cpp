#include "lst/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lst {

namespace {

double eval_loss(const LossBuilder& build_loss) {
  Tape tape;
  tape.set_grad_enabled(false);
  const double v = build_loss(tape).value.at(0);
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ParamList& params, const LossBuilder& build_loss, double h, double tol) {
  for (const auto& p : params) {
    if (p.trainable() && p.value().dtype() != DType::Float64) {
      throw ContractError("grad_check: parameter " + p.name() + " is not float64");
    }
  }
  GradMap analytic;
  {
    Tape tape;
    Var loss = build_loss(tape);
    if (!std::isfinite(loss.value.at(0))) throw NumericError("grad_check: non-finite loss");
    analytic = tape.backward(loss);
  }

  GradCheckReport report;
  for (auto p : params) {
    if (!p.trainable()) continue;
    GradCheckEntry entry;
    entry.name = p.name();
    Tensor& w = p.value();
    entry.elements = w.numel();
    auto data = w.data<double>();
    const auto it = analytic.find(p.name());
    std::vector<double> numeric(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = eval_loss(build_loss);
      data[i] = orig - h;
      const double down = eval_loss(build_loss);
      data[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double scale = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = it == analytic.end() ? 0.0 : it->second.at(static_cast<std::int64_t>(i));
      scale = std::max({scale, std::abs(a), std::abs(numeric[i])});
      worst = std::max(worst, std::abs(a - numeric[i]));
    }
    entry.max_rel_error = worst / std::max(scale, kGradCheckFloor);
    entry.ok = entry.max_rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.ok = report.ok && entry.ok;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  for (const auto& e : report.entries) {
    os << "param=" << e.name << " elements=" << e.elements << " max_rel_error=" << e.max_rel_error
       << " ok=" << (e.ok ? 1 : 0) << '\n';
  }
  os << "max_rel_error=" << report.max_rel_error << " ok=" << (report.ok ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace lst
