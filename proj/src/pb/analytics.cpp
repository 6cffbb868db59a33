#include "pb/analytics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace pb {

namespace {

using TaskRef = std::pair<DatasetId, std::string>;

// success set of one paradigm over the model's tasks
std::set<TaskRef> success_set(const RunMatrix& matrix, const std::string& model_or_all,
                              ParadigmId p) {
    std::set<TaskRef> out;
    for (const RunRecord* r : matrix.all()) {
        if (!model_or_all.empty() && r->model != model_or_all) continue;
        if (r->paradigm != p) continue;
        if (r->success) out.insert({r->dataset, r->task_id});
    }
    return out;
}

std::set<TaskRef> recorded_tasks(const RunMatrix& matrix, const std::string& model_or_all,
                                 std::optional<ParadigmId> p = std::nullopt) {
    std::set<TaskRef> out;
    for (const RunRecord* r : matrix.all()) {
        if (!model_or_all.empty() && r->model != model_or_all) continue;
        if (p && r->paradigm != *p) continue;
        out.insert({r->dataset, r->task_id});
    }
    return out;
}

}  // namespace

double oracle_rate(const RunMatrix& matrix, const std::string& model,
                   const std::vector<ParadigmId>& subset) {
    if (subset.empty()) {
        throw std::invalid_argument("oracle subset is empty");
    }
    std::set<TaskRef> tasks = recorded_tasks(matrix, model);
    if (tasks.empty()) {
        throw std::invalid_argument("no records for model " + model);
    }
    std::set<TaskRef> solved;
    for (ParadigmId p : subset) {
        for (const TaskRef& t : success_set(matrix, model, p)) solved.insert(t);
    }
    return 100.0 * static_cast<double>(solved.size()) / static_cast<double>(tasks.size());
}

std::pair<ParadigmId, double> best_single(const RunMatrix& matrix, const std::string& model) {
    std::set<TaskRef> tasks = recorded_tasks(matrix, model);
    if (tasks.empty()) {
        throw std::invalid_argument("no records for model " + model);
    }
    std::optional<ParadigmId> best;
    double best_rate = -1.0;
    for (ParadigmId p : all_paradigms()) {
        if (recorded_tasks(matrix, model, p).empty()) continue;
        double rate = 100.0 * static_cast<double>(success_set(matrix, model, p).size()) /
                      static_cast<double>(tasks.size());
        // strict > keeps the lower canonical rank on ties
        if (rate > best_rate) {
            best_rate = rate;
            best = p;
        }
    }
    if (!best) {
        throw std::invalid_argument("no paradigm with records for model " + model);
    }
    return {*best, best_rate};
}

OracleReport oracle_report(const RunMatrix& matrix, const std::string& model) {
    OracleReport report;
    report.model = model;
    report.subset_used = all_paradigms();
    std::set<TaskRef> tasks = recorded_tasks(matrix, model);
    if (tasks.empty()) {
        throw std::invalid_argument("no records for model " + model);
    }
    report.direct_rate = 100.0 *
                         static_cast<double>(success_set(matrix, model, ParadigmId::Direct).size()) /
                         static_cast<double>(tasks.size());
    auto [best, rate] = best_single(matrix, model);
    report.best_single_paradigm = best;
    report.best_single_rate = rate;
    report.oracle_rate = oracle_rate(matrix, model, report.subset_used);
    report.oracle_gap = report.oracle_rate - report.best_single_rate;
    return report;
}

double jaccard_overlap(const RunMatrix& matrix, const std::string& model_or_all, ParadigmId p1,
                       ParadigmId p2) {
    // restrict to tasks both paradigms attempted
    std::set<TaskRef> shared;
    {
        std::set<TaskRef> t1 = recorded_tasks(matrix, model_or_all, p1);
        std::set<TaskRef> t2 = recorded_tasks(matrix, model_or_all, p2);
        std::set_intersection(t1.begin(), t1.end(), t2.begin(), t2.end(),
                              std::inserter(shared, shared.begin()));
    }
    std::set<TaskRef> s1, s2;
    for (const TaskRef& t : success_set(matrix, model_or_all, p1)) {
        if (shared.count(t)) s1.insert(t);
    }
    for (const TaskRef& t : success_set(matrix, model_or_all, p2)) {
        if (shared.count(t)) s2.insert(t);
    }
    std::set<TaskRef> uni = s1;
    uni.insert(s2.begin(), s2.end());
    if (uni.empty()) return 1.0;  // both empty: equally failing everywhere
    size_t inter = 0;
    for (const TaskRef& t : s1) {
        if (s2.count(t)) ++inter;
    }
    return static_cast<double>(inter) / static_cast<double>(uni.size());
}

double recovery(double direct, double routed, double oracle) {
    if (oracle <= direct) {
        throw std::invalid_argument("recovery undefined: oracle <= direct");
    }
    return 100.0 * (routed - direct) / (oracle - direct);
}

Table oracle_report_table(const std::vector<OracleReport>& reports) {
    Table t;
    t.name = "oracle";
    t.columns = {"model", "direct", "best_single", "best_single_rate", "oracle", "oracle_gap_pp"};
    for (const auto& r : reports) {
        t.rows.push_back({r.model, format_double(r.direct_rate),
                          paradigm_name(r.best_single_paradigm),
                          format_double(r.best_single_rate), format_double(r.oracle_rate),
                          format_double(r.oracle_gap)});
    }
    return t;
}

Table jaccard_table(const RunMatrix& matrix, const std::string& model_or_all) {
    Table t;
    t.name = model_or_all.empty() ? "jaccard_all_models" : ("jaccard_" + model_or_all);
    t.columns = {"paradigm"};
    for (ParadigmId p : all_paradigms()) t.columns.push_back(paradigm_name(p));
    for (ParadigmId p1 : all_paradigms()) {
        std::vector<std::string> row = {paradigm_name(p1)};
        for (ParadigmId p2 : all_paradigms()) {
            row.push_back(format_double(jaccard_overlap(matrix, model_or_all, p1, p2), 3));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace pb
