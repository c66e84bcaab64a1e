pub mod behavior_gen;
pub mod central_opt;
pub mod config;
pub mod decision;
pub mod driver_models;
pub mod emergency;
pub mod geometry;
pub mod lane_change;
pub mod planner;
pub mod qp;
pub mod road_model;
pub mod sim;
pub mod traffic;
pub mod types;
