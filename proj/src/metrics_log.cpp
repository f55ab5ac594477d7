#include "flest/metrics_log.hpp"

namespace flest {

nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["num_queries"] = r.num_queries;
    j["mrr"] = r.mrr;
    for (const auto& [k, v] : r.hits) j["hits@" + std::to_string(k)] = v;
    return j;
}

nlohmann::ordered_json round_to_json(const RoundRecord& rec) {
    nlohmann::ordered_json j;
    j["round"] = rec.round;
    j["mean_train_loss"] = rec.mean_train_loss;
    j["client_losses"] = rec.client_losses;
    if (rec.has_eval) {
        nlohmann::ordered_json valid;
        valid["clients"] = nlohmann::ordered_json::array();
        for (const EvalReport& r : rec.client_valid) valid["clients"].push_back(report_to_json(r));
        valid["aggregate"] = report_to_json(rec.valid_aggregate);
        valid["mean_client_mrr"] = rec.mean_client_mrr;
        j["valid"] = valid;
    }
    return j;
}

}  // namespace flest
