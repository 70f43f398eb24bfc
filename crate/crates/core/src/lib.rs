pub mod he;
pub mod roles;
pub mod setops;
pub mod repository;
pub mod hash;
pub mod protocols;
pub mod hardening;
pub mod runtime;
