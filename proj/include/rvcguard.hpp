#pragma once

#include "rvcguard/audio.hpp"
#include "rvcguard/classifiers.hpp"
#include "rvcguard/dataset.hpp"
#include "rvcguard/errors.hpp"
#include "rvcguard/features.hpp"
#include "rvcguard/metrics.hpp"
#include "rvcguard/streaming.hpp"
