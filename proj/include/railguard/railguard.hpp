#pragma once

#include "railguard/calibration.hpp"
#include "railguard/geometry.hpp"
#include "railguard/ingest.hpp"
#include "railguard/metrics.hpp"
#include "railguard/pipeline.hpp"
#include "railguard/report.hpp"
#include "railguard/simgen.hpp"
