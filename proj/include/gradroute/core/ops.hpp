#pragma once

#include "gradroute/core/ops_basic.hpp"
#include "gradroute/core/ops_matmul.hpp"
#include "gradroute/core/ops_nn.hpp"
#include "gradroute/core/ops_reduce.hpp"
#include "gradroute/core/ops_shape.hpp"
#include "gradroute/core/route_ops.hpp"
