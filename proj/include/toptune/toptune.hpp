#pragma once

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"
#include "toptune/harness.hpp"
#include "toptune/kernel.hpp"
#include "toptune/krr.hpp"
#include "toptune/model_io.hpp"
#include "toptune/pcg.hpp"
#include "toptune/protocol.hpp"
#include "toptune/report.hpp"
#include "toptune/synthetic.hpp"
