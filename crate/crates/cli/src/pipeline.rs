//! PSS, Floquet decomposition, noise operators and spectra in sequence,
//! followed by the optional Monte-Carlo reference and file export.

use std::fmt;
use std::path::{Path, PathBuf};

use floqnoise::floquet::{floquet_decompose, FloquetOptions};
use floqnoise::model::CircuitModel;
use floqnoise::noise_ops::NoiseOperators;
use floqnoise::oracle::{estimate_spectrum, simulate_sde, McSpectrum};
use floqnoise::pss::{pss_harmonics, solve_pss};
use floqnoise::spectra::{assemble_datasets, generate_sweep, SpectrumDataset};
use floqnoise::Complex64;

use crate::config::SimulationConfig;
use crate::error::{CliError, Stage};
use crate::plot::render_plot;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also emit a plot script and an SVG figure.
    pub plot: bool,
}

/// Carrier power of one node at one harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierPower {
    pub node: String,
    pub nu: usize,
    pub power: f64,
}

/// What an engineer needs to sanity-check a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub period: f64,
    pub omega0: f64,
    pub c: f64,
    pub k: usize,
    /// Retained exponents, zero mode first.
    pub exponents: Vec<Complex64>,
    pub carrier: Vec<CarrierPower>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    /// Number of retained modes `L`.
    pub fn retained(&self) -> usize {
        self.exponents.len()
    }

    /// Lorentzian half-power corner of harmonic `nu` (Hz).
    pub fn corner(&self, nu: usize) -> f64 {
        let n = nu as f64;
        0.5 * self.omega0 * self.omega0 * n * n * self.c / (2.0 * std::f64::consts::PI)
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run            {}", self.name)?;
        writeln!(f, "T0             {:.9e} s", self.period)?;
        writeln!(f, "omega0         {:.9e} rad/s", self.omega0)?;
        writeln!(f, "c              {:.6e} s", self.c)?;
        writeln!(f, "corner (nu=1)  {:.6e} Hz", self.corner(1))?;
        writeln!(f, "k              {}", self.k)?;
        writeln!(f, "L              {}", self.retained())?;
        for (i, mu) in self.exponents.iter().enumerate() {
            let kind = if i < self.k { "phase" } else { "amplitude" };
            writeln!(f, "  mu_{:<3} {:+.6e} {:+.6e}j  ({kind})", i + 1, mu.re, mu.im)?;
        }
        for cp in &self.carrier {
            writeln!(f, "carrier {:<8} nu={} |X|^2 = {:.6e}", cp.node, cp.nu, cp.power)?;
        }
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Monte-Carlo spectrum for one node and harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct McOverlay {
    pub node: String,
    pub nu: usize,
    pub spectrum: McSpectrum,
}

impl McOverlay {
    pub fn stem(&self) -> String {
        if self.nu == 1 {
            self.node.clone()
        } else {
            format!("{}.nu{}", self.node, self.nu)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub datasets: Vec<SpectrumDataset>,
    pub overlays: Vec<McOverlay>,
}

fn stage(s: Stage) -> impl Fn(floqnoise::Error) -> CliError {
    move |e| CliError::new(s, e)
}

fn csv<F>(write: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Run every stage and write the results into `cfg.output_dir`. Nothing is
/// written unless all stages succeed.
pub fn run_pipeline(cfg: &SimulationConfig, opts: RunOptions) -> Result<RunOutput, CliError> {
    let built = cfg.model.build().map_err(stage(Stage::Model))?;
    let model = &built.model;
    let guess = cfg.pss.guess(&built.guess);
    log::info!("solving PSS from T = {:.6e}", guess.period);
    let pss = solve_pss(model, &guess, &cfg.pss.options()).map_err(stage(Stage::Pss))?;
    if !pss.is_periodic(cfg.pss.tol) {
        return Err(CliError::new(
            Stage::Pss,
            floqnoise::Error::NoConvergence {
                iterations: cfg.pss.max_iter,
                defect: pss.defect(),
            },
        ));
    }

    log::info!("Floquet decomposition, T0 = {:.9e}", pss.period());
    let fopts = FloquetOptions {
        nf: cfg.nf,
        ..FloquetOptions::default()
    };
    let set = floquet_decompose(model, &pss, cfg.k, &fopts).map_err(stage(Stage::Floquet))?;
    let carrier = pss_harmonics(&pss, cfg.nf).map_err(stage(Stage::Floquet))?;

    let nodes: Vec<(usize, String)> = cfg
        .noise_nodes
        .iter()
        .map(|n| (model.node_index(n).expect("validated node"), n.clone()))
        .collect();
    let freqs = generate_sweep(&cfg.sweep).map_err(stage(Stage::Spectra))?;

    let mut datasets = Vec::new();
    let mut carrier_power = Vec::new();
    let mut c = 0.0;
    for &nu in &cfg.nu_list {
        log::info!("noise operators for nu = {nu}");
        let ops = NoiseOperators::assemble(&set, &carrier, cfg.k, &nodes, nu).map_err(stage(Stage::Operators))?;
        c = ops.c;
        for n in &ops.nodes {
            carrier_power.push(CarrierPower {
                node: n.node.clone(),
                nu,
                power: n.carrier_power,
            });
        }
        let ds = assemble_datasets(&ops, &freqs);
        for d in &ds {
            let bad = d.pnoise_dbc.iter().filter(|v| !v.is_finite()).count();
            if bad > 0 {
                log::warn!(
                    "{}: {bad} offsets have a non-positive phase-noise density; the expansion is not valid that far from the carrier",
                    d.node
                );
            }
        }
        datasets.extend(ds);
    }

    let overlays = match &cfg.mc {
        Some(mc) => monte_carlo(model, &pss, cfg, mc, &nodes)?,
        None => Vec::new(),
    };

    let mut files: Vec<(String, Vec<u8>)> = vec![
        (format!("{}.pss.csv", cfg.name), csv(|b| pss.write_csv(b))),
        (format!("{}.floquet.csv", cfg.name), csv(|b| set.write_csv(b))),
    ];
    for d in &datasets {
        let stem = d.stem();
        files.push((format!("{stem}.pn.csv"), csv(|b| d.write_pn_csv(b))));
        files.push((format!("{stem}.an.csv"), csv(|b| d.write_an_csv(b))));
        files.push((format!("{stem}.xn.csv"), csv(|b| d.write_xn_csv(b))));
        files.push((format!("{stem}.spectra.csv"), csv(|b| d.write_csv(b))));
    }
    for o in &overlays {
        files.push((format!("{}.mc.csv", o.stem()), csv(|b| o.spectrum.write_csv(b))));
    }
    if opts.plot {
        let (gp, svg) = render_plot(&cfg.name, &datasets, &overlays);
        files.push((format!("{}.gp", cfg.name), gp.into_bytes()));
        files.push((format!("{}.svg", cfg.name), svg.into_bytes()));
    }
    let written = write_all(&cfg.output_dir, &files).map_err(|e| CliError::new(Stage::Output, e.into()))?;

    let summary = RunSummary {
        name: cfg.name.clone(),
        period: pss.period(),
        omega0: pss.omega0(),
        c,
        k: cfg.k,
        exponents: set.exponents(),
        carrier: carrier_power,
        files: written,
    };
    Ok(RunOutput {
        summary,
        datasets,
        overlays,
    })
}

fn monte_carlo(
    model: &dyn CircuitModel,
    pss: &floqnoise::pss::PssSolution,
    cfg: &SimulationConfig,
    mc: &crate::config::McSettings,
    nodes: &[(usize, String)],
) -> Result<Vec<McOverlay>, CliError> {
    let t0 = pss.period();
    let mcfg = mc.config(t0);
    let idx: Vec<usize> = nodes.iter().map(|n| n.0).collect();
    log::info!(
        "Monte-Carlo: {} paths of {:.3e} s at dt = {:.3e} s",
        mcfg.n_paths,
        mcfg.duration,
        mcfg.dt
    );
    let run = simulate_sde(model, pss, &mcfg, &idx).map_err(stage(Stage::MonteCarlo))?;
    let window = (mcfg.window / run.record_dt).floor() as usize;
    let mut out = Vec::new();
    for (slot, (_, name)) in nodes.iter().enumerate() {
        let f = run.carrier_frequency(slot).ok_or_else(|| {
            CliError::new(
                Stage::MonteCarlo,
                floqnoise::Error::Internal(format!("no carrier crossings recorded on node `{name}`")),
            )
        })?;
        for &nu in &cfg.nu_list {
            let sp = estimate_spectrum(&run.series(slot), run.record_dt, window, nu as f64 * f, cfg.sweep.stop)
                .map_err(stage(Stage::MonteCarlo))?;
            out.push(McOverlay {
                node: name.clone(),
                nu,
                spectrum: sp,
            });
        }
    }
    Ok(out)
}

/// Write every file under a temporary name first and rename once all of
/// them exist; on failure the temporaries are removed.
fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let tmp: Vec<PathBuf> = files.iter().map(|(n, _)| dir.join(format!(".{n}.partial"))).collect();
    let staged = files.iter().zip(&tmp).try_for_each(|((_, bytes), p)| std::fs::write(p, bytes));
    if let Err(e) = staged {
        for p in &tmp {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }
    let mut done = Vec::new();
    for ((name, _), p) in files.iter().zip(&tmp) {
        let dest = dir.join(name);
        std::fs::rename(p, &dest)?;
        done.push(dest);
    }
    Ok(done)
}
