#pragma once
// Complementarity analytics over a RunMatrix: oracle selection, oracle gap,
// Jaccard overlap, best-single identification, gap recovery.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pb/core.hpp"
#include "pb/reports.hpp"

namespace pb {

struct OracleReport {
    std::string model;
    double direct_rate = 0.0;       // percent
    ParadigmId best_single_paradigm = ParadigmId::Direct;
    double best_single_rate = 0.0;  // percent
    double oracle_rate = 0.0;       // percent
    double oracle_gap = 0.0;        // percentage points
    std::vector<ParadigmId> subset_used;
};

// A task counts as solved iff any paradigm in the subset succeeded on it.
// Denominator: every task with any record for the model. Throws on an empty subset.
double oracle_rate(const RunMatrix& matrix, const std::string& model,
                   const std::vector<ParadigmId>& subset);

// Highest overall success rate across all tasks for the model; ties broken by
// canonical order (lower rank wins).
std::pair<ParadigmId, double> best_single(const RunMatrix& matrix, const std::string& model);

// Six-paradigm oracle by default; the five-paradigm (no Direct) variant is
// reachable through oracle_rate's subset argument.
OracleReport oracle_report(const RunMatrix& matrix, const std::string& model);

// J = |S1 n S2| / |S1 u S2| over success sets restricted to shared tasks;
// both-empty is 1 by convention. model_or_all: empty string aggregates models.
double jaccard_overlap(const RunMatrix& matrix, const std::string& model_or_all, ParadigmId p1,
                       ParadigmId p2);

// 100 * (routed - direct) / (oracle - direct). Throws when oracle <= direct.
double recovery(double direct, double routed, double oracle);

Table oracle_report_table(const std::vector<OracleReport>& reports);
Table jaccard_table(const RunMatrix& matrix, const std::string& model_or_all);

}  // namespace pb
