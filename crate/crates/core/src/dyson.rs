//! The flux-regularized derivative expansion: composition bookkeeping,
//! time-simplex quadrature, the exact `f_k` calibration integral, and the
//! Monte-Carlo / deterministic evaluation of the infinite-volume expansion
//! terms assembled into the diagonal-derivative identity.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::magcore::{path_flux, FluxChain, Point3};
use crate::mehler::{free_heat_kernel, mehler_kernel, r_infty, KernelParams};
use crate::quad::{gauss_hermite, tanh_sinh_nodes};
use crate::{numerical, validation, Result};

/// Largest derivative order for which compositions are enumerated.
pub const COMPOSITION_CAP: usize = 12;

/// Largest order accepted by [`assemble_derivative`]; MC variance grows
/// quickly with the order.
pub const ASSEMBLE_CAP: usize = 4;

/// Dilation factor of the Gaussian chain proposal relative to the true
/// segment times. Any factor ≥ 1 keeps the importance weight bounded by a
/// polynomial (the transverse width of the magnetic kernel never exceeds
/// the free one); a mild dilation also covers the polynomial growth of
/// the flux factor without inflating the weight spread the way a large
/// one would.
const PROPOSAL_DILATION: f64 = 2.0;

/// Samples per independently seeded RNG chunk; fixed so that results are
/// bit-identical for any worker count.
const CHUNK: u64 = 4096;

/// An ordered tuple (i₁,…,i_j) with every part in {1,2}. Indexes one term
/// of the expansion; `order_sum` is Σ i_l.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    parts: Vec<u8>,
}

impl Composition {
    pub fn new(parts: Vec<u8>) -> Result<Composition> {
        if parts.is_empty() || parts.iter().any(|&p| p != 1 && p != 2) {
            return Err(validation(format!("invalid composition parts: {parts:?}")));
        }
        Ok(Composition { parts })
    }

    pub fn parts(&self) -> &[u8] {
        &self.parts
    }

    /// Chain length j.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a composition always has at least one part
    }

    pub fn order_sum(&self) -> usize {
        self.parts.iter().map(|&p| p as usize).sum()
    }

    /// Stable small integer distinguishing compositions, used to key RNG
    /// streams (base-3 encoding of the parts).
    fn stream_id(&self) -> u64 {
        self.parts.iter().fold(1u64, |acc, &p| acc * 3 + p as u64)
    }
}

/// All tuples (i₁,…,i_j) ∈ {1,2}^j with Σ i = n, every j; ordered by
/// increasing length, lexicographic within a length. The count is
/// Fibonacci(n+1).
pub fn enumerate_compositions(n: usize) -> Result<Vec<Composition>> {
    if n == 0 || n > COMPOSITION_CAP {
        return Err(validation(format!(
            "composition order must be in 1..={COMPOSITION_CAP}, got {n}"
        )));
    }
    let mut out = Vec::new();
    for j in n.div_ceil(2)..=n {
        // exactly (n - j) parts equal 2 among j slots
        let mut tuple = vec![1u8; j];
        collect_with_twos(&mut tuple, 0, n - j, &mut out);
    }
    out.sort_by(|a, b| a.parts.len().cmp(&b.parts.len()).then(a.parts.cmp(&b.parts)));
    Ok(out)
}

fn collect_with_twos(tuple: &mut Vec<u8>, from: usize, twos: usize, out: &mut Vec<Composition>) {
    if twos == 0 {
        out.push(Composition { parts: tuple.clone() });
        return;
    }
    if tuple.len() - from < twos {
        return;
    }
    for pos in from..=(tuple.len() - twos) {
        tuple[pos] = 2;
        collect_with_twos(tuple, pos + 1, twos - 1, out);
        tuple[pos] = 1;
    }
}

/// Strictly ordered times 0 < τ_j < … < τ₁ < β (stored descending) with
/// the uniform-sampling volume weight β^j/j!.
#[derive(Debug, Clone)]
pub struct SimplexSample {
    /// τ₁ > τ₂ > … > τ_j
    pub times: Vec<f64>,
    pub weight: f64,
}

/// Sorted uniform order statistics: exact uniform law on the simplex.
pub fn sample_simplex<R: Rng + ?Sized>(j: usize, beta: f64, rng: &mut R) -> SimplexSample {
    assert!(j >= 1 && beta > 0.0);
    let mut times: Vec<f64> = (0..j).map(|_| rng.gen_range(0.0..beta)).collect();
    times.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut weight = 1.0;
    for l in 1..=j {
        weight *= beta / l as f64;
    }
    SimplexSample { times, weight }
}

/// The calibration integrand `f_k(τ) = [(β−τ₁)(τ₁−τ₂)…(τ_{k−1}−τ_k)τ_k]^{−1/2}`
/// on the descending simplex.
pub fn fk_value(times: &[f64], beta: f64) -> f64 {
    let k = times.len();
    let mut prod = beta - times[0];
    for l in 1..k {
        prod *= times[l - 1] - times[l];
    }
    prod *= times[k - 1];
    1.0 / prod.sqrt()
}

/// Exact value of ∫_{D_k(β)} f_k dτ = β^{(k−1)/2} π^{(k+1)/2} / Γ((k+1)/2).
pub fn fk_closed_form(k: usize, beta: f64) -> f64 {
    assert!(k >= 1 && beta > 0.0);
    beta.powf((k as f64 - 1.0) / 2.0) * PI.powf((k as f64 + 1.0) / 2.0) / gamma_half(k + 1)
}

/// Γ(m/2) for integer m ≥ 1, computed exactly (factorials and √π).
fn gamma_half(m: usize) -> f64 {
    if m % 2 == 0 {
        // Γ(n) = (n-1)!
        let n = m / 2;
        let mut f = 1.0;
        for i in 2..n {
            f *= i as f64;
        }
        f
    } else {
        // Γ(n + 1/2) = (2n)! √π / (4^n n!)
        let n = m / 2;
        let mut num = 1.0;
        for i in 2..=(2 * n) {
            num *= i as f64;
        }
        let mut den = 1.0;
        for i in 2..=n {
            den *= i as f64;
        }
        num * PI.sqrt() / (4.0f64.powi(n as i32) * den)
    }
}

/// Deterministic evaluation of ∫_{D_k} f_k by nested tanh–sinh rules
/// (the integrand has inverse-square-root singularities on every facet);
/// supported for k ≤ 3.
pub fn fk_integral_deterministic(k: usize, beta: f64) -> Result<f64> {
    if !(1..=3).contains(&k) {
        return Err(validation(format!("deterministic f_k supported for k ≤ 3, got {k}")));
    }
    let levels = [7u32, 6, 6];
    Ok(fk_det_recurse(&[], beta, k, beta, &levels))
}

fn fk_det_recurse(fixed: &[f64], upper: f64, k: usize, beta: f64, levels: &[u32]) -> f64 {
    let depth = fixed.len();
    let mut acc = 0.0;
    for (tau, w) in tanh_sinh_nodes(0.0, upper, levels[depth]) {
        let mut times = fixed.to_vec();
        times.push(tau);
        if depth + 1 == k {
            acc += w * fk_value(&times, beta);
        } else {
            acc += w * fk_det_recurse(&times, tau, k, beta, levels);
        }
    }
    acc
}

/// Monte-Carlo estimate of ∫_{D_k} f_k with the uniform simplex sampler;
/// returns (estimate, standard error). Calibrates the sampler against
/// [`fk_closed_form`].
pub fn fk_integral_mc(k: usize, beta: f64, samples: u64, seed: u64) -> (f64, f64) {
    assert!(k >= 1 && samples >= 2);
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix3(seed, 0xF5CA11B8, chunk));
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let smp = sample_simplex(k, beta, &mut rng);
                let v = smp.weight * fk_value(&smp.times, beta);
                s += v;
                s2 += v * v;
            }
            (s, s2, count)
        })
        .collect();
    let (mut s, mut s2, mut n) = (0.0, 0.0, 0u64);
    for (a, b, c) in partials {
        s += a;
        s2 += b;
        n += c;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = (s2 / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

/// How an expansion term is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureMode {
    /// Nested tanh–sinh (time) × tensor Gauss–Hermite (space); only for
    /// chain length ≤ 3 and flux power ≤ 2. Exact error 0 reported.
    Deterministic,
    /// Importance-sampled Monte Carlo with a Brownian-bridge proposal.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    pub mode: QuadratureMode,
    /// Per-term MC sample budget (ignored in deterministic mode).
    pub sample_count: u64,
    pub seed: u64,
    /// 0 = rayon default.
    pub worker_count: usize,
}

impl QuadratureSpec {
    pub fn mc(sample_count: u64, seed: u64) -> QuadratureSpec {
        QuadratureSpec { mode: QuadratureMode::MonteCarlo, sample_count, seed, worker_count: 0 }
    }

    pub fn deterministic() -> QuadratureSpec {
        QuadratureSpec { mode: QuadratureMode::Deterministic, sample_count: 0, seed: 0, worker_count: 0 }
    }
}

/// Estimate of one (or an assembled sum of) expansion term(s). The
/// integrals are complex term-wise; only assembled sums are asserted
/// real, so the imaginary part is carried along with its own error.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionResult {
    pub value: f64,
    pub std_error: f64,
    pub imag_value: f64,
    pub imag_std_error: f64,
    pub terms_evaluated: u64,
}

/// The pointwise integrand of one expansion term:
/// `(i Fl_j)^m/m! · G_∞(x,y₁;β−τ₁) · R_{i₁}(y₁,y₂;τ₁−τ₂) ⋯ R_{i_j}(y_j,x;τ_j)`.
pub fn chain_integrand(
    c: &Composition,
    m: usize,
    x: Point3,
    nodes: &[Point3],
    s: &SimplexSample,
    p: KernelParams,
) -> Result<Complex64> {
    let j = c.len();
    if nodes.len() != j || s.times.len() != j {
        return Err(validation(format!(
            "chain length mismatch: {} parts, {} nodes, {} times",
            j,
            nodes.len(),
            s.times.len()
        )));
    }
    let seg = segment_times(p.beta(), &s.times);
    // flux power
    let flux = path_flux(&FluxChain::new(x, nodes.to_vec())?);
    let mut pref = Complex64::new(1.0, 0.0);
    if m > 0 {
        let mut fact = 1.0;
        for i in 1..=m {
            fact *= i as f64;
        }
        pref = (Complex64::i() * flux).powi(m as i32) / fact;
    }
    let mut val = pref * mehler_kernel(x, nodes[0], p.with_beta(seg[0])?);
    for l in 0..j {
        let to = if l + 1 < j { nodes[l + 1] } else { x };
        val *= r_infty(c.parts()[l], nodes[l], to, p.with_beta(seg[l + 1])?)?;
    }
    Ok(val)
}

/// Segment durations (β−τ₁, τ₁−τ₂, …, τ_j) of the descending time vector.
fn segment_times(beta: f64, times: &[f64]) -> Vec<f64> {
    let j = times.len();
    let mut seg = Vec::with_capacity(j + 1);
    seg.push(beta - times[0]);
    for l in 1..j {
        seg.push(times[l - 1] - times[l]);
    }
    seg.push(times[j - 1]);
    seg
}

/// Density of the Brownian-bridge proposal (chain of free heat kernels at
/// `dilation ×` segment times, pinned to x at both ends).
fn bridge_density(x: Point3, nodes: &[Point3], seg: &[f64], dilation: f64) -> f64 {
    let beta: f64 = seg.iter().sum();
    let mut q = 1.0 / ((2.0 * PI * dilation * beta).powf(-1.5));
    let mut prev = x;
    for (l, &node) in nodes.iter().enumerate() {
        q *= free_heat_kernel(prev, node, dilation * seg[l]);
        prev = node;
    }
    q * free_heat_kernel(prev, x, dilation * seg[seg.len() - 1])
}

/// One expansion term (fixed composition, fixed flux power) at base point
/// x = 0; the diagonal value is x-independent (tested, not assumed).
pub fn w_term_infty(c: &Composition, m: usize, p: KernelParams, q: &QuadratureSpec) -> Result<ExpansionResult> {
    w_term_infty_at(c, m, Point3::ORIGIN, p, q)
}

/// Same as [`w_term_infty`] with an explicit base point.
pub fn w_term_infty_at(
    c: &Composition,
    m: usize,
    x: Point3,
    p: KernelParams,
    q: &QuadratureSpec,
) -> Result<ExpansionResult> {
    match q.mode {
        QuadratureMode::Deterministic => w_term_deterministic(c, m, x, p),
        QuadratureMode::MonteCarlo => {
            if q.sample_count < 100 {
                return Err(validation(format!(
                    "MC sample count {} too small to estimate a variance (min 100)",
                    q.sample_count
                )));
            }
            w_term_mc(c, m, x, p, q)
        }
    }
}

fn w_term_mc(
    c: &Composition,
    m: usize,
    x: Point3,
    p: KernelParams,
    q: &QuadratureSpec,
) -> Result<ExpansionResult> {
    let samples = q.sample_count;
    let chunks = samples.div_ceil(CHUNK);
    let run = || -> Vec<(f64, f64, f64, f64, u64)> {
        (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix3(q.seed, c.stream_id() * 64 + m as u64, chunk));
                let count = CHUNK.min(samples - chunk * CHUNK);
                let (mut sr, mut sr2, mut si, mut si2) = (0.0, 0.0, 0.0, 0.0);
                for _ in 0..count {
                    let v = mc_one_sample(c, m, x, p, &mut rng);
                    sr += v.re;
                    sr2 += v.re * v.re;
                    si += v.im;
                    si2 += v.im * v.im;
                }
                (sr, sr2, si, si2, count)
            })
            .collect()
    };
    let partials = if q.worker_count > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(q.worker_count)
            .build()
            .map_err(|e| numerical(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    };
    let (mut sr, mut sr2, mut si, mut si2, mut n) = (0.0, 0.0, 0.0, 0.0, 0u64);
    for (a, b, cc, d, e) in partials {
        sr += a;
        sr2 += b;
        si += cc;
        si2 += d;
        n += e;
    }
    let nf = n as f64;
    let mean_r = sr / nf;
    let mean_i = si / nf;
    if !(mean_r.is_finite() && mean_i.is_finite()) {
        return Err(numerical("non-finite MC partial sums in expansion term"));
    }
    let var_r = (sr2 / nf - mean_r * mean_r).max(0.0);
    let var_i = (si2 / nf - mean_i * mean_i).max(0.0);
    Ok(ExpansionResult {
        value: mean_r,
        std_error: (var_r / nf).sqrt(),
        imag_value: mean_i,
        imag_std_error: (var_i / nf).sqrt(),
        terms_evaluated: n,
    })
}

fn mc_one_sample<R: Rng + ?Sized>(
    c: &Composition,
    m: usize,
    x: Point3,
    p: KernelParams,
    rng: &mut R,
) -> Complex64 {
    let j = c.len();
    let beta = p.beta();
    let s = sample_simplex(j, beta, rng);
    let seg = segment_times(beta, &s.times);
    if seg.iter().any(|&t| t < 1e-13 * beta) {
        // measure-zero sliver; skip to avoid dividing by an underflowed
        // proposal density
        return Complex64::new(0.0, 0.0);
    }
    // sequential Brownian-bridge draw at dilated times
    let mut nodes = Vec::with_capacity(j);
    let mut prev = x;
    let mut rem = beta;
    for l in 0..j {
        let t = seg[l];
        let after = rem - t;
        let frac = t / rem;
        let sd = (PROPOSAL_DILATION * t * after / rem).sqrt();
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let g3: f64 = rng.sample(StandardNormal);
        let y = Point3::new(
            prev.x1 + frac * (x.x1 - prev.x1) + sd * g1,
            prev.x2 + frac * (x.x2 - prev.x2) + sd * g2,
            prev.x3 + frac * (x.x3 - prev.x3) + sd * g3,
        );
        nodes.push(y);
        prev = y;
        rem = after;
    }
    let dens = bridge_density(x, &nodes, &seg, PROPOSAL_DILATION);
    let f = chain_integrand(c, m, x, &nodes, &s, p).expect("validated lengths");
    f * (s.weight / dens)
}

/// Per-chain-length quadrature schedule for the deterministic mode.
fn det_schedule(j: usize) -> (u32, usize) {
    match j {
        1 => (6, 12), // time tanh-sinh level, Gauss-Hermite points per dim
        2 => (2, 5),
        _ => (1, 3),
    }
}

fn w_term_deterministic(c: &Composition, m: usize, x: Point3, p: KernelParams) -> Result<ExpansionResult> {
    let j = c.len();
    if j > 3 || m > 2 {
        return Err(validation(format!(
            "deterministic mode supports chain length ≤ 3 and flux power ≤ 2, got j={j}, m={m}"
        )));
    }
    let (time_level, gh_n) = det_schedule(j);
    let (gh_x, gh_w) = gauss_hermite(gh_n);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut evals = 0u64;
    det_time_recurse(
        c,
        m,
        x,
        p,
        &mut Vec::new(),
        p.beta(),
        time_level,
        1.0,
        &gh_x,
        &gh_w,
        &mut acc,
        &mut evals,
    )?;
    if !acc.re.is_finite() || !acc.im.is_finite() {
        return Err(numerical("non-finite deterministic quadrature sum"));
    }
    Ok(ExpansionResult {
        value: acc.re,
        std_error: 0.0,
        imag_value: acc.im,
        imag_std_error: 0.0,
        terms_evaluated: evals,
    })
}

#[allow(clippy::too_many_arguments)]
fn det_time_recurse(
    c: &Composition,
    m: usize,
    x: Point3,
    p: KernelParams,
    times: &mut Vec<f64>,
    upper: f64,
    level: u32,
    w_time: f64,
    gh_x: &[f64],
    gh_w: &[f64],
    acc: &mut Complex64,
    evals: &mut u64,
) -> Result<()> {
    let j = c.len();
    for (tau, w) in tanh_sinh_nodes(0.0, upper, level) {
        times.push(tau);
        if times.len() == j {
            let s = SimplexSample { times: times.clone(), weight: 1.0 };
            let seg = segment_times(p.beta(), times);
            let mut nodes = Vec::with_capacity(j);
            let inner = det_spatial_recurse(c, m, x, p, &s, &seg, &mut nodes, x, p.beta(), gh_x, gh_w, evals)?;
            *acc += inner * (w_time * w) * PI.powf(-((3 * j) as f64) / 2.0);
        } else {
            det_time_recurse(c, m, x, p, times, tau, level, w_time * w, gh_x, gh_w, acc, evals)?;
        }
        times.pop();
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn det_spatial_recurse(
    c: &Composition,
    m: usize,
    x: Point3,
    p: KernelParams,
    s: &SimplexSample,
    seg: &[f64],
    nodes: &mut Vec<Point3>,
    prev: Point3,
    rem: f64,
    gh_x: &[f64],
    gh_w: &[f64],
    evals: &mut u64,
) -> Result<Complex64> {
    let j = c.len();
    let k = nodes.len();
    if k == j {
        *evals += 1;
        let f = chain_integrand(c, m, x, nodes, s, p)?;
        let dens = bridge_density(x, nodes, seg, 1.0);
        return Ok(f / dens);
    }
    let t = seg[k];
    let after = rem - t;
    let frac = t / rem;
    let sd2 = (2.0 * t * after / rem).sqrt(); // σ√2 for the GH substitution
    let mean = Point3::new(
        prev.x1 + frac * (x.x1 - prev.x1),
        prev.x2 + frac * (x.x2 - prev.x2),
        prev.x3 + frac * (x.x3 - prev.x3),
    );
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, &xa) in gh_x.iter().enumerate() {
        for (b, &xb) in gh_x.iter().enumerate() {
            for (d, &xd) in gh_x.iter().enumerate() {
                let y = Point3::new(mean.x1 + sd2 * xa, mean.x2 + sd2 * xb, mean.x3 + sd2 * xd);
                nodes.push(y);
                let inner =
                    det_spatial_recurse(c, m, x, p, s, seg, nodes, y, after, gh_x, gh_w, evals)?;
                nodes.pop();
                acc += inner * (gh_w[a] * gh_w[b] * gh_w[d]);
            }
        }
    }
    Ok(acc)
}

/// Estimate of `∂ⁿ_ω G_∞(x,x;β,ω)` from the expansion:
/// `n! · Σ_{k=1}^n Σ_{(i₁…i_j): Σi=k} (−1)^j · (term with flux power n−k)`.
///
/// MC budgets are stratified over terms proportionally to a pilot
/// variance estimate; errors combine in quadrature.
pub fn assemble_derivative(n: usize, p: KernelParams, q: &QuadratureSpec) -> Result<ExpansionResult> {
    assemble_derivative_at(n, Point3::ORIGIN, p, q)
}

/// [`assemble_derivative`] with an explicit (physically irrelevant) base point.
pub fn assemble_derivative_at(
    n: usize,
    x: Point3,
    p: KernelParams,
    q: &QuadratureSpec,
) -> Result<ExpansionResult> {
    if n == 0 || n > ASSEMBLE_CAP {
        return Err(validation(format!(
            "assemble order must be in 1..={ASSEMBLE_CAP}, got {n}"
        )));
    }
    // gather all (composition, flux power, sign) terms
    let mut terms: Vec<(Composition, usize, f64)> = Vec::new();
    for k in 1..=n {
        for c in enumerate_compositions(k)? {
            let sign = if c.len() % 2 == 0 { 1.0 } else { -1.0 };
            terms.push((c, n - k, sign));
        }
    }
    if q.mode == QuadratureMode::Deterministic {
        if terms.iter().any(|(c, m, _)| c.len() > 3 || *m > 2) {
            return Err(validation(format!(
                "deterministic assembly not available at order {n} (chain too long or flux power > 2)"
            )));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut evals = 0;
        for (c, m, sign) in &terms {
            let r = w_term_deterministic(c, *m, x, p)?;
            acc += Complex64::new(r.value, r.imag_value) * *sign;
            evals += r.terms_evaluated;
        }
        let fact = factorial(n);
        return Ok(ExpansionResult {
            value: fact * acc.re,
            std_error: 0.0,
            imag_value: fact * acc.im,
            imag_std_error: 0.0,
            terms_evaluated: evals,
        });
    }

    // pilot pass for stratification
    let pilot_n = (q.sample_count / 20).clamp(200, 20_000);
    let mut sigmas = Vec::with_capacity(terms.len());
    let mut total_pilot = 0u64;
    for (c, m, _) in &terms {
        let spec = QuadratureSpec { sample_count: pilot_n, seed: q.seed ^ 0x9E3779B97F4A7C15, ..*q };
        let r = w_term_infty_at(c, *m, x, p, &spec)?;
        sigmas.push((r.std_error.hypot(r.imag_std_error)) * (pilot_n as f64).sqrt());
        total_pilot += r.terms_evaluated;
    }
    let sigma_sum: f64 = sigmas.iter().sum();
    let total_budget = q.sample_count * terms.len() as u64;
    let floor = (total_budget / (10 * terms.len() as u64)).max(200);

    let mut value = 0.0;
    let mut var = 0.0;
    let mut imag = 0.0;
    let mut imag_var = 0.0;
    let mut evals = total_pilot;
    for (idx, (c, m, sign)) in terms.iter().enumerate() {
        let share = if sigma_sum > 0.0 {
            (total_budget as f64 * sigmas[idx] / sigma_sum) as u64
        } else {
            total_budget / terms.len() as u64
        };
        let spec = QuadratureSpec { sample_count: share.max(floor), ..*q };
        let r = w_term_infty_at(c, *m, x, p, &spec)?;
        value += sign * r.value;
        var += r.std_error * r.std_error;
        imag += sign * r.imag_value;
        imag_var += r.imag_std_error * r.imag_std_error;
        evals += r.terms_evaluated;
    }
    if !value.is_finite() || !imag.is_finite() {
        return Err(numerical("non-finite assembled expansion value"));
    }
    let fact = factorial(n);
    Ok(ExpansionResult {
        value: fact * value,
        std_error: fact * var.sqrt(),
        imag_value: fact * imag,
        imag_std_error: fact * imag_var.sqrt(),
        terms_evaluated: evals,
    })
}

fn factorial(n: usize) -> f64 {
    let mut f = 1.0;
    for i in 2..=n {
        f *= i as f64;
    }
    f
}

/// SplitMix64-style mixing of three words into one RNG seed.
fn mix3(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(b)
        .wrapping_mul(0xBF58476D1CE4E5B9)
        .wrapping_add(c);
    z ^= z >> 30;
    z = z.wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
