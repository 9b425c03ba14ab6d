//! Retracting a precision matrix along a symmetric direction, compared with a
//! plain additive step, and transporting the direction to the new point.

use emgvb::spd::{cholesky_of, retract, spd_inverse, symmetrize, transport, SpdMatrix};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> emgvb::Result<()> {
    let d = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let p = SpdMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * 0.1)?;
    let (p_inv, _) = spd_inverse(&p)?;
    let b = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let xi = symmetrize(&b)?;

    println!("{:>8} {:>12} {:>12}", "scale", "additive", "retraction");
    for scale in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
        let step = xi.scale(scale);
        let additive = cholesky_of(&(p.as_matrix() + step.as_matrix())).is_ok();
        let retracted = retract(&p, &p_inv, &step, true);
        println!(
            "{scale:>8} {:>12} {:>12}",
            if additive { "spd" } else { "not spd" },
            if retracted.is_ok() { "spd" } else { "failed" }
        );
    }

    let step = xi.scale(0.5);
    let p_new = retract(&p, &p_inv, &step, false)?;
    let moved = transport(&p, &p_inv, &p_new, &step)?;
    println!("|xi|_F at P      {:.4}", step.frobenius_norm());
    println!("|xi|_F at P_new  {:.4}", moved.frobenius_norm());
    Ok(())
}
