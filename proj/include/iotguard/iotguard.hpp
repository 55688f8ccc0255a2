#pragma once

#include "iotguard/config.hpp"
#include "iotguard/csv.hpp"
#include "iotguard/error.hpp"
#include "iotguard/featstats.hpp"
#include "iotguard/feature_mask.hpp"
#include "iotguard/flowdata.hpp"
#include "iotguard/harness.hpp"
#include "iotguard/metrics.hpp"
#include "iotguard/models.hpp"
#include "iotguard/preprocess.hpp"
#include "iotguard/random.hpp"
#include "iotguard/selector.hpp"
#include "iotguard/tree.hpp"
#include "iotguard/tuner.hpp"
