// Umbrella header.
#pragma once

#include <stridenav/types.hpp>
#include <stridenav/so3.hpp>
#include <stridenav/earth.hpp>
#include <stridenav/attitude.hpp>
#include <stridenav/strapdown.hpp>
#include <stridenav/zupt_detect.hpp>
#include <stridenav/fusion.hpp>
#include <stridenav/gait_sim.hpp>
#include <stridenav/observability.hpp>
#include <stridenav/log_io.hpp>
#include <stridenav/pipeline.hpp>
