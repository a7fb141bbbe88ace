#include "valor/evalkit.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace valor::evalkit {

Eigen::MatrixXi confusion_matrix(std::span<const int> preds, std::span<const int> golds, int classes)
{
    if (preds.size() != golds.size())
        throw std::invalid_argument("confusion_matrix: length mismatch");
    if (classes < 1)
        throw std::invalid_argument("confusion_matrix: need at least one class");
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(classes, classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (golds[i] < 0 || golds[i] >= classes || preds[i] < 0 || preds[i] >= classes)
            throw std::out_of_range("confusion_matrix: label out of range at index " + std::to_string(i));
        ++m(golds[i], preds[i]);
    }
    return m;
}

namespace {

double ratio(double num, double den)
{
    return den == 0.0 ? 0.0 : num / den;
}

} // namespace

TaskReport report_from_confusion(const Eigen::MatrixXi& m)
{
    TaskReport r;
    r.confusion = m;
    r.count = m.sum();
    if (r.count == 0)
        throw std::invalid_argument("task_report: empty split");
    const int c = static_cast<int>(m.rows());
    r.accuracy = static_cast<double>(m.trace()) / r.count;
    for (int k = 0; k < c; ++k) {
        const double tp = m(k, k);
        const double p = ratio(tp, m.col(k).sum());
        const double rc = ratio(tp, m.row(k).sum());
        r.precision.push_back(p);
        r.recall.push_back(rc);
        r.f1.push_back(ratio(2.0 * p * rc, p + rc));
        r.macro_f1 += r.f1.back();
    }
    r.macro_f1 /= c;
    return r;
}

TaskReport task_report(std::span<const int> preds, std::span<const int> golds, int classes)
{
    if (preds.empty())
        throw std::invalid_argument("task_report: empty split");
    return report_from_confusion(confusion_matrix(preds, golds, classes));
}

MultiLabelReport multilabel_report(const Eigen::MatrixXi& preds, const Eigen::MatrixXi& golds)
{
    if (preds.rows() != golds.rows() || preds.cols() != golds.cols())
        throw std::invalid_argument("multilabel_report: shape mismatch");
    if (preds.rows() == 0)
        throw std::invalid_argument("multilabel_report: empty split");
    MultiLabelReport r;
    r.count = static_cast<int>(preds.rows());
    int exact = 0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i)
        exact += preds.row(i) == golds.row(i) ? 1 : 0;
    r.subset_accuracy = static_cast<double>(exact) / r.count;
    for (Eigen::Index c = 0; c < preds.cols(); ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (Eigen::Index i = 0; i < preds.rows(); ++i) {
            tp += preds(i, c) && golds(i, c);
            fp += preds(i, c) && !golds(i, c);
            fn += !preds(i, c) && golds(i, c);
        }
        r.f1.push_back(ratio(2.0 * tp, 2.0 * tp + fp + fn));
        r.macro_f1 += r.f1.back();
    }
    r.macro_f1 /= static_cast<double>(preds.cols());
    return r;
}

Eigen::MatrixXd expert_similarity(const std::vector<Eigen::MatrixXd>& w)
{
    const auto k = static_cast<Eigen::Index>(w.size());
    for (const auto& m : w) {
        if (m.rows() != w.front().rows() || m.cols() != w.front().cols())
            throw std::invalid_argument("expert_similarity: matrices differ in shape");
        if (m.norm() == 0.0)
            throw UndefinedMetric("expert_similarity: zero-norm weight matrix");
    }
    Eigen::MatrixXd s(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        s(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const std::size_t a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
            s(i, j) = s(j, i) = w[a].reshaped().dot(w[b].reshaped()) / (w[a].norm() * w[b].norm());
        }
    }
    return s;
}

ExpertMatrix parse_expert_matrix(const std::string& name)
{
    if (name == "alpha")
        return ExpertMatrix::Alpha;
    if (name == "w_in")
        return ExpertMatrix::WIn;
    if (name == "w_out")
        return ExpertMatrix::WOut;
    throw std::invalid_argument("unknown expert matrix '" + name + "' (expected alpha, w_in or w_out)");
}

const char* expert_matrix_name(ExpertMatrix m)
{
    switch (m) {
    case ExpertMatrix::Alpha: return "alpha";
    case ExpertMatrix::WIn: return "w_in";
    case ExpertMatrix::WOut: return "w_out";
    }
    return "?";
}

nlohmann::json to_json(const TaskReport& r, const std::vector<std::string>& names)
{
    nlohmann::json j;
    j["count"] = r.count;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t k = 0; k < r.f1.size(); ++k)
        per.push_back({{"class", k < names.size() ? names[k] : std::to_string(k)},
                       {"precision", r.precision[k]},
                       {"recall", r.recall[k]},
                       {"f1", r.f1[k]}});
    j["per_class"] = per;
    nlohmann::json cm = nlohmann::json::array();
    for (Eigen::Index g = 0; g < r.confusion.rows(); ++g) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index p = 0; p < r.confusion.cols(); ++p)
            row.push_back(r.confusion(g, p));
        cm.push_back(row);
    }
    j["confusion"] = cm;
    return j;
}

nlohmann::json to_json(const MultiLabelReport& r)
{
    return {{"count", r.count}, {"subset_accuracy", r.subset_accuracy}, {"f1", r.f1}, {"macro_f1", r.macro_f1}};
}

std::string confusion_csv(const Eigen::MatrixXi& m, const std::vector<std::string>& names)
{
    auto name = [&](Eigen::Index k) { return k < static_cast<Eigen::Index>(names.size()) ? names[k] : std::to_string(k); };
    std::ostringstream os;
    os << "gold\\pred";
    for (Eigen::Index p = 0; p < m.cols(); ++p)
        os << ',' << name(p);
    os << '\n';
    for (Eigen::Index g = 0; g < m.rows(); ++g) {
        os << name(g);
        for (Eigen::Index p = 0; p < m.cols(); ++p)
            os << ',' << m(g, p);
        os << '\n';
    }
    return os.str();
}

std::string similarity_csv(const Eigen::MatrixXd& m)
{
    std::ostringstream os;
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << (j ? "," : "") << buf;
        }
        os << '\n';
    }
    return os.str();
}

} // namespace valor::evalkit
