//! Lambertian diffuse blended with a GGX metal lobe by `metallic`.

use std::f64::consts::PI;

use super::math::Vec3;
use super::scene::Material;

#[derive(Clone, Copy, Debug)]
pub struct Bsdf {
    albedo: Vec3,
    metallic: f64,
    alpha: f64,
}

pub struct BsdfSample {
    pub wi: Vec3,
    /// `f · cos / pdf`.
    pub weight: Vec3,
}

impl Bsdf {
    pub fn new(m: &Material) -> Self {
        Self { albedo: m.albedo, metallic: m.metallic, alpha: (m.roughness * m.roughness).max(1e-3) }
    }

    fn ggx_d(&self, cos_h: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        let d = cos_h * cos_h * (a2 - 1.0) + 1.0;
        a2 / (PI * d * d)
    }

    fn smith_g1(&self, cos: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        2.0 * cos / (cos + (a2 + (1.0 - a2) * cos * cos).sqrt())
    }

    fn fresnel(&self, cos: f64) -> Vec3 {
        let f0 = self.albedo;
        f0 + (Vec3::ONE - f0) * (1.0 - cos).clamp(0.0, 1.0).powi(5)
    }

    /// BSDF value (without the cosine term).
    pub fn eval(&self, n: Vec3, wo: Vec3, wi: Vec3) -> Vec3 {
        let (cos_o, cos_i) = (n.dot(wo), n.dot(wi));
        if cos_o <= 0.0 || cos_i <= 0.0 {
            return Vec3::ZERO;
        }
        let diffuse = self.albedo * ((1.0 - self.metallic) / PI);
        if self.metallic <= 0.0 {
            return diffuse;
        }
        let h = (wo + wi).normalized();
        let spec = self.fresnel(wi.dot(h)) * (self.ggx_d(n.dot(h)) * self.smith_g1(cos_o) * self.smith_g1(cos_i)
            / (4.0 * cos_o * cos_i));
        diffuse + spec * self.metallic
    }

    pub fn pdf(&self, n: Vec3, wo: Vec3, wi: Vec3) -> f64 {
        let cos_i = n.dot(wi);
        if cos_i <= 0.0 || n.dot(wo) <= 0.0 {
            return 0.0;
        }
        let diffuse = cos_i / PI;
        if self.metallic <= 0.0 {
            return diffuse;
        }
        let h = (wo + wi).normalized();
        let spec = self.ggx_d(n.dot(h)) * n.dot(h) / (4.0 * wo.dot(h).abs());
        (1.0 - self.metallic) * diffuse + self.metallic * spec
    }

    pub fn sample(&self, n: Vec3, wo: Vec3, u_lobe: f64, u1: f64, u2: f64) -> Option<BsdfSample> {
        let (t, b) = n.basis();
        let wi = if u_lobe < self.metallic {
            let a2 = self.alpha * self.alpha;
            let cos_h = ((1.0 - u1) / (1.0 + (a2 - 1.0) * u1)).sqrt();
            let sin_h = (1.0 - cos_h * cos_h).max(0.0).sqrt();
            let phi = 2.0 * PI * u2;
            let h = t * (sin_h * phi.cos()) + b * (sin_h * phi.sin()) + n * cos_h;
            h * (2.0 * wo.dot(h)) - wo
        } else {
            let r = u1.sqrt();
            let phi = 2.0 * PI * u2;
            t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()
        };
        let pdf = self.pdf(n, wo, wi);
        if pdf <= 0.0 {
            return None;
        }
        let weight = self.eval(n, wo, wi) * (n.dot(wi) / pdf);
        weight.is_finite().then_some(BsdfSample { wi, weight })
    }
}
