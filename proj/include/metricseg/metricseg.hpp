#pragma once

#include "metricseg/boruvka.hpp"
#include "metricseg/checkpoint.hpp"
#include "metricseg/config.hpp"
#include "metricseg/error.hpp"
#include "metricseg/evaluation.hpp"
#include "metricseg/features.hpp"
#include "metricseg/hdbscan.hpp"
#include "metricseg/kdtree.hpp"
#include "metricseg/loss.hpp"
#include "metricseg/model.hpp"
#include "metricseg/pipeline.hpp"
#include "metricseg/point_cloud.hpp"
#include "metricseg/scene.hpp"
#include "metricseg/voxel.hpp"
