//! Numerical workbench for free boundary minimal surfaces in the unit ball,
//! built by desingularizing the critical catenoid and the equatorial disk
//! with bent Scherk necks.

pub mod driver;
pub mod geom;
pub mod linsolve;
pub mod mesher;
pub mod rotsym;
pub mod scherk;
pub mod util;
