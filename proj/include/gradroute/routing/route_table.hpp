#pragma once

#include <cmath>
#include <map>
#include <string>

#include "gradroute/core/route_ops.hpp"

namespace gradroute {

// Partition-keyed routes: every data point with the same partition label gets
// identical mask weights. Sites not listed for a label default to weight 1.
template <class T>
struct RouteTable {
    std::map<std::string, std::map<std::string, Tensor<T>>> routes;

    void set(const std::string& label, const std::string& site_id, Tensor<T> weight) {
        for (T x : *weight.data)
            if (!std::isfinite(double(x)))
                throw config_error("RouteTable: non-finite weight for site " + site_id);
        routes[label][site_id] = std::move(weight);
    }

    // Mask site for one partition label; unlisted sites are all-ones scalars.
    MaskSite<T> site(const std::string& label, const std::string& site_id) const {
        auto lit = routes.find(label);
        if (lit != routes.end()) {
            auto sit = lit->second.find(site_id);
            if (sit != lit->second.end()) return MaskSite<T>{site_id, sit->second};
        }
        return MaskSite<T>::scalar(site_id, T(1));
    }
};

} // namespace gradroute
