//! Velocities, the hard-spheres collision rule and mean-field objects.

mod maxwellian;
mod operator;
mod state;
mod velocity;

pub use maxwellian::Maxwellian;
pub use operator::{collision_operator_apply, collision_operator_integrate, SigmaScheme};
pub use state::{project_flat_to_boltzmann_sphere, project_to_boltzmann_sphere, ParticleState, SPHERE_TOLERANCE};
pub use velocity::{
    collide, collide_into, dist, dot, norm_sq, sample_sigma, sample_sigma_into, Velocity, SIGMA_TOLERANCE,
};
