//! Distributed AC optimal power flow laboratory.
//!
//! This crate implements a full pipeline for studying how the convergence
//! tolerance of consensus-based distributed OPF affects physical constraint
//! violations, and for tightening operational bounds until the distributed
//! dispatch is violation-free:
//!
//! - [`caseio`] — MATPOWER case parsing, partition files, CSV/plot-data output
//! - [`netmodel`] — per-unit network model, regional decomposition with
//!   fictitious boundary buses, load envelopes
//! - [`nlp`] — sparse nonlinear programming with an embedded primal-dual
//!   interior-point solver
//! - [`acopf`] — centralized AC-OPF models (baseline, feasibility check, cost)
//! - [`acpf`] — Newton-Raphson AC power flow and violation measurement
//! - [`admm`] — consensus ADMM driver for distributed OPF
//! - [`wcv`] — worst-case constraint violation optimization
//! - [`tighten`] — alternating bound-tightening loop
//! - [`harness`] — experiment orchestration (sweeps, certification, histograms)

pub mod acopf;
pub mod acpf;
pub mod admm;
pub mod caseio;
pub mod harness;
pub mod netmodel;
pub mod nlp;
pub mod pfmodel;
pub mod tighten;
pub mod wcv;
