use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;

use suc_core::analysis::{
    berlekamp_massey, build_parity_cascade, correlation_scan, exhaustive_recovery,
    subset_correlation,
};
use suc_core::boolean::{combiner_f16, profile, tt_to_anf, TruthTable};
use suc_core::bounds::{bound_report, degeneration_log2, LcBound};
use suc_core::catalog::REFERENCE_COUNTS;
use suc_core::genie::{genie_create, EntropySource, SucInstance};
use suc_core::protocol::{
    memory_pair, Device, ProtocolError, TaConfig, TcpTransport, Transport, TrustedAuthority,
    UirStore,
};
use suc_core::{AnfFunction, BitSeq, Catalog, FeedbackSpec, Ksg, KsgConfig, DESIGN_LENGTHS};

use crate::args::*;
use crate::output::{tagged, Out};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn protocol(e: ProtocolError) -> CliError {
    match e {
        ProtocolError::Store(s) => CliError::Data(s.to_string()),
        other => CliError::Protocol(other.to_string()),
    }
}

pub fn run(cli: &Cli, out: &Out) -> Result<()> {
    match &cli.command {
        Command::Catalog(CatalogCmd::Verify) => catalog_verify(cli, out),
        Command::Bf(BfCmd::Profile {
            builtin,
            anf,
            truth_table,
            vars,
        }) => bf_profile(
            out,
            builtin.is_some(),
            anf.as_deref(),
            truth_table.as_deref(),
            *vars,
        ),
        Command::Suc(cmd) => suc(cli, out, cmd),
        Command::Keystream(a) => keystream(cli, out, a),
        Command::Analyze(cmd) => analyze(cli, out, cmd),
        Command::Bounds => bounds(cli, out),
        Command::Ta(cmd) => ta(cli, out, cmd),
        Command::Device(cmd) => device(cli, out, cmd),
    }
}

fn load_catalog(cli: &Cli) -> Result<Catalog> {
    match &cli.catalog {
        Some(p) => Catalog::load(p).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => Ok(Catalog::builtin()),
    }
}

fn verified_catalog(cli: &Cli) -> Result<Catalog> {
    let mut c = load_catalog(cli)?;
    let report = c.verify();
    if !report.failures.is_empty() {
        return Err(data(format!(
            "{} specs in the catalog fail period verification",
            report.failures.len()
        )));
    }
    Ok(c)
}

fn entropy(cli: &Cli) -> EntropySource {
    cli.seed.map_or(EntropySource::Os, EntropySource::Seeded)
}

/// Nonce generator for protocol parties: derived from the seed when one is
/// given, so transcripts replay exactly.
fn party_rng(cli: &Cli, stream: u64) -> ChaCha20Rng {
    match cli.seed {
        Some(seed) => {
            let mut r = ChaCha20Rng::from_seed(seed);
            r.set_stream(100 + stream);
            r
        }
        None => ChaCha20Rng::from_os_rng(),
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(data(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn catalog_verify(cli: &Cli, out: &Out) -> Result<()> {
    let mut c = load_catalog(cli)?;
    let report = c.verify();
    let fingerprint = hex::encode(c.fingerprint());
    out.emit(
        format!("{report}checked {} specs, {} failures\nfingerprint {fingerprint}", report.checked, report.failures.len()),
        &tagged("catalog verify", json!({"checked": report.checked, "failures": report.failures, "counts": report.counts, "fingerprint": fingerprint})),
    );
    if !report.failures.is_empty() {
        return Err(data(format!(
            "{} specs are not maximum period",
            report.failures.len()
        )));
    }
    Ok(())
}

fn bf_profile(
    out: &Out,
    builtin: bool,
    anf: Option<&str>,
    tt: Option<&str>,
    vars: Option<usize>,
) -> Result<()> {
    let f = match (builtin, anf, tt) {
        (true, _, _) => combiner_f16(),
        (false, Some(terms), _) => {
            AnfFunction::parse_terms(terms, vars.expect("clap requires vars")).map_err(data)?
        }
        (false, None, Some(hex)) => {
            let table =
                TruthTable::from_hex(vars.expect("clap requires vars"), hex).map_err(data)?;
            tt_to_anf(&table)
        }
        _ => {
            return Err(CliError::Usage(
                "give --builtin F16, --anf or --truth-table".into(),
            ))
        }
    };
    let p = profile(&f).map_err(data)?;
    out.emit(&p, &tagged("bf profile", &p));
    Ok(())
}

fn read_blob(path: &Path, catalog: &Catalog) -> Result<SucInstance> {
    let bytes = fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    SucInstance::import_blob(&bytes, catalog).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn suc(cli: &Cli, out: &Out, cmd: &SucCmd) -> Result<()> {
    match cmd {
        SucCmd::Create { out: path, force } => {
            refuse_overwrite(path, *force)?;
            let catalog = verified_catalog(cli)?;
            let inst = genie_create(&catalog, entropy(cli)).map_err(data)?;
            write_file(path, &inst.export_blob())?;
            out.emit(
                format!("wrote {} ({} state bits, catalog {})", path.display(), inst.config().total_state_bits(), hex::encode(inst.catalog_fingerprint())),
                &tagged("suc create", json!({"path": path, "seeded": cli.seed.is_some(), "catalog": hex::encode(inst.catalog_fingerprint())})),
            );
        }
        SucCmd::Respond {
            blob,
            k,
            count,
            dry_run,
        } => {
            if *k == 0 {
                return Err(CliError::Usage("k must be positive".into()));
            }
            let catalog = load_catalog(cli)?;
            let mut inst = read_blob(blob, &catalog)?;
            for _ in 0..*count {
                let index = inst.cursor();
                let y = inst.respond(*k).to_hex();
                out.emit(
                    format!("Y_{index} {y}"),
                    &tagged(
                        "suc respond",
                        json!({"index": index, "k": k, "response": y}),
                    ),
                );
            }
            if !dry_run {
                write_file(blob, &inst.export_blob())?;
            }
        }
        SucCmd::Info { blob, reveal } => {
            let catalog = load_catalog(cli)?;
            let inst = read_blob(blob, &catalog)?;
            let cfg = inst.config();
            let specs: Vec<String> = cfg.registers().iter().map(ToString::to_string).collect();
            let mut text = format!(
                "catalog   {}\nlengths   {:?}\nstate     {} bits\ncursor    {}\ncycle     {}",
                hex::encode(inst.catalog_fingerprint()),
                cfg.lengths(),
                cfg.total_state_bits(),
                inst.cursor(),
                inst.cycle()
            );
            let mut record = json!({
                "catalog": hex::encode(inst.catalog_fingerprint()),
                "lengths": cfg.lengths(),
                "state_bits": cfg.total_state_bits(),
                "cursor": inst.cursor(),
                "cycle": inst.cycle(),
            });
            if *reveal {
                for (i, s) in specs.iter().enumerate() {
                    text.push_str(&format!("\nA{:<2}      {s}", i + 1));
                }
                record["selection"] = json!(inst.selection());
                record["registers"] = json!(specs);
            }
            out.emit(text, &tagged("suc info", record));
        }
    }
    Ok(())
}

fn keystream(cli: &Cli, out: &Out, a: &KeystreamArgs) -> Result<()> {
    let catalog = load_catalog(cli)?;
    let mut inst = read_blob(&a.blob, &catalog)?;
    let bits = inst.keystream(a.bits);
    match &a.out {
        Some(p) => {
            write_file(p, bits.to_bit_string().as_bytes())?;
            out.emit(
                format!("wrote {} bits to {}", a.bits, p.display()),
                &tagged("keystream", json!({"bits": a.bits, "path": p})),
            );
        }
        None => out.emit(
            bits.to_hex(),
            &tagged("keystream", json!({"bits": a.bits, "hex": bits.to_hex()})),
        ),
    }
    Ok(())
}

fn read_bits(path: &Path, binary: bool, limit: Option<usize>) -> Result<BitSeq> {
    let raw = fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let seq = if binary {
        BitSeq::from_bytes_msb(&raw, raw.len() * 8).expect("length matches")
    } else {
        let mut s = BitSeq::new();
        for &b in &raw {
            match b {
                b'0' => s.push(false),
                b'1' => s.push(true),
                b if b.is_ascii_whitespace() => {}
                other => {
                    return Err(data(format!(
                        "{}: unexpected byte {other:#04x} in bit text",
                        path.display()
                    )))
                }
            }
        }
        s
    };
    Ok(match limit {
        Some(n) if n < seq.len() => seq.slice(0, n),
        _ => seq,
    })
}

fn analyze(cli: &Cli, out: &Out, cmd: &AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::Bm(input) => {
            let seq = read_bits(&input.input, input.binary, input.limit)?;
            let r = berlekamp_massey(&seq);
            let poly = r.connection.to_bit_string();
            out.emit(
                format!("bits {}\nlinear complexity {}\nconnection {poly}", seq.len(), r.linear_complexity),
                &tagged("analyze bm", json!({"bits": seq.len(), "linear_complexity": r.linear_complexity, "connection": poly})),
            );
        }
        AnalyzeCmd::Correlation {
            bits,
            max_order,
            sigma,
            mask,
        } => {
            let catalog = load_catalog(cli)?;
            let seed = cli.seed.unwrap_or_else(|| {
                let mut s = [0u8; 32];
                ChaCha20Rng::from_os_rng().fill_bytes(&mut s);
                s
            });
            let mut rng = ChaCha20Rng::from_seed(seed);
            let selection: [usize; 16] = std::array::from_fn(|i| {
                (rng.next_u64() % catalog.count(DESIGN_LENGTHS[i]).max(1)) as usize
            });
            let cfg = KsgConfig::full(&catalog, &selection).map_err(data)?;
            let states: Vec<u64> = cfg
                .registers()
                .iter()
                .map(|s| loop {
                    let x = rng.next_u64() & s.state_mask();
                    if x != s.degenerate_state() {
                        break x;
                    }
                })
                .collect();
            let mut g = Ksg::new(cfg, &states).map_err(data)?;
            let mut z = BitSeq::with_capacity(*bits);
            let mut inputs = Vec::with_capacity(*bits);
            for _ in 0..*bits {
                let (b, x) = g.next_with_inputs();
                z.push(b);
                inputs.push(x);
            }
            let table = correlation_scan(&z, &inputs, 16, *max_order, *sigma);
            let strongest = table.strongest.clone();
            let mut text = format!(
                "samples {}\nsubsets tested (order <= {}) {}\nbeyond {}σ {}",
                table.samples,
                table.max_order,
                table.subsets_tested,
                table.threshold_sigma,
                table.significant.len()
            );
            if let Some(s) = &strongest {
                text.push_str(&format!(
                    "\nstrongest mask {:04x} order {} z {:.3}",
                    s.mask, s.order, s.z_score
                ));
            }
            let extra = mask.map(|m| subset_correlation(&z, &inputs, m));
            if let Some(e) = &extra {
                text.push_str(&format!(
                    "\nmask {:04x} order {} bias {:.6} z {:.3}",
                    e.mask, e.order, e.bias, e.z_score
                ));
            }
            out.emit(
                text,
                &tagged(
                    "analyze correlation",
                    json!({"table": table, "mask": extra}),
                ),
            );
        }
        AnalyzeCmd::Parity {
            lengths,
            periods,
            input,
        } => {
            let periods: Vec<usize> = if lengths.is_empty() {
                periods.clone()
            } else {
                lengths.iter().map(|&n| (1usize << n) - 1).collect()
            };
            if periods.is_empty() {
                return Err(CliError::Usage("give --lengths or --periods".into()));
            }
            let c = build_parity_cascade(&periods);
            let mut text = format!(
                "periods {:?}\ntaps {}\nspan {}",
                c.periods,
                c.term_count(),
                c.span()
            );
            let mut record =
                json!({"periods": c.periods, "taps": c.term_count(), "span": c.span()});
            if let Some(p) = &input.input {
                let seq = read_bits(p, input.binary, input.limit)?;
                let r = c.apply(&seq).map_err(data)?;
                text.push_str(&format!(
                    "\nresidual bits {}\nresidual weight {}",
                    r.len(),
                    r.count_ones()
                ));
                record["residual_bits"] = json!(r.len());
                record["residual_weight"] = json!(r.count_ones());
            }
            out.emit(text, &tagged("analyze parity", record));
        }
        AnalyzeCmd::Recover {
            registers,
            combiner,
            input,
        } => {
            let specs = registers
                .iter()
                .map(|s| s.parse::<FeedbackSpec>().map_err(data))
                .collect::<Result<Vec<_>>>()?;
            let f = AnfFunction::parse_terms(combiner, specs.len()).map_err(data)?;
            let cfg = KsgConfig::new(specs, f).map_err(data)?;
            let seq = read_bits(&input.input, input.binary, input.limit)?;
            let r = exhaustive_recovery(&cfg, &seq).map_err(data)?;
            let mut text = format!(
                "tested {}\nconsistent {}",
                r.candidates_tested,
                r.states.len()
            );
            for s in r.states.iter().take(16) {
                text.push_str(&format!("\n{s:?}"));
            }
            out.emit(text, &tagged("analyze recover", &r));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundsRecord {
    #[serde(flatten)]
    catalog: suc_core::bounds::BoundReport,
    reference_cardinality_log2: f64,
    reference_brute_force_log2: f64,
    degeneration_log2: i64,
    parity_taps: usize,
    parity_span: usize,
}

fn bounds(cli: &Cli, out: &Out) -> Result<()> {
    let catalog = load_catalog(cli)?;
    let lengths: Vec<usize> = catalog.lengths().collect();
    if lengths.len() != 16 {
        return Err(data(format!(
            "the combiner needs 16 register lengths; the catalog covers {}",
            lengths.len()
        )));
    }
    let f = combiner_f16();
    let ci = suc_core::boolean::correlation_immunity(&suc_core::boolean::walsh_transform(
        &suc_core::boolean::anf_to_tt(&f).map_err(data)?,
    ));
    let counts = catalog.position_counts();
    let report = bound_report(&lengths, &f, &counts, ci);
    let reference = bound_report(&lengths, &f, &REFERENCE_COUNTS, ci);
    // The cascade cancels the registers that enter F only linearly; the
    // first register of the nonlinear part must stay zero for F to degenerate.
    let nonlinear: u64 = f
        .terms()
        .iter()
        .filter(|m| m.degree() > 1)
        .fold(0, |acc, m| acc | m.mask());
    let linear: Vec<usize> = f
        .terms()
        .iter()
        .filter(|m| m.degree() == 1 && m.mask() & nonlinear == 0)
        .map(|m| m.mask().trailing_zeros() as usize)
        .collect();
    let cascade = build_parity_cascade(
        &linear
            .iter()
            .map(|&i| (1usize << lengths[i]) - 1)
            .collect::<Vec<_>>(),
    );
    let guard = lengths[nonlinear.trailing_zeros() as usize] as u32;
    let record = BoundsRecord {
        reference_cardinality_log2: reference.cardinality_log2,
        reference_brute_force_log2: reference.brute_force_log2,
        degeneration_log2: degeneration_log2(guard, cascade.term_count() as u32),
        parity_taps: cascade.term_count(),
        parity_span: cascade.span(),
        catalog: report,
    };
    let r = &record.catalog;
    let lc = match &r.lc_lower_bound {
        LcBound::Proven {
            witness,
            value,
            log2,
            ..
        } => format!("{value} (2^{log2:.5}, witness x{witness:?})"),
        LcBound::Unavailable { reason } => format!("unavailable: {reason}"),
    };
    let alg = r.algebraic.as_ref().map_or("n/a".to_string(), |a| {
        format!(
            "degree {} over witness {:?}, monomials 2^{:.3}, cost 2^{:.2} (omega {})",
            a.degree, a.witness, a.monomial_count_log2, a.cost_log2, a.omega
        )
    });
    let text = format!(
        "lengths                {:?}\n\
         state bits             {}\n\
         LC lower bound         {lc}\n\
         period lcm             2^{:.3}\n\
         cardinality (catalog)  2^{:.3}  counts {:?}\n\
         cardinality (table)    2^{:.3}\n\
         brute force (catalog)  2^{:.3}\n\
         brute force (table)    2^{:.3}\n\
         correlation immunity   {}\n\
         correlation floor      2^{}\n\
         algebraic attack       {alg}\n\
         parity cascade         {} taps, span {}\n\
         degeneration           2^{}",
        r.lengths,
        r.total_state_bits,
        r.period_lcm_log2,
        r.cardinality_log2,
        r.position_counts,
        record.reference_cardinality_log2,
        r.brute_force_log2,
        record.reference_brute_force_log2,
        r.correlation_immunity,
        r.correlation_floor,
        record.parity_taps,
        record.parity_span,
        record.degeneration_log2,
    );
    out.emit(text, &tagged("bounds", &record));
    Ok(())
}

fn open_store(path: &Path) -> Result<UirStore> {
    UirStore::open(path).map_err(data)
}

fn load_device(cli: &Cli, path: &Path) -> Result<Device> {
    let catalog = load_catalog(cli)?;
    let mut d =
        Device::load(path, &catalog).map_err(|e| data(format!("{}: {e}", path.display())))?;
    if cli.seed.is_some() {
        d.set_rng(party_rng(cli, 1));
    }
    Ok(d)
}

fn save_device(d: &Device, path: &Path) -> Result<()> {
    d.save(path)
        .map_err(|e| data(format!("{}: {e}", path.display())))
}

fn make_ta(cli: &Cli, store: &Path, k: usize, t: usize) -> Result<TrustedAuthority> {
    let store = open_store(store)?;
    TrustedAuthority::with_rng(store, TaConfig { k, t }, party_rng(cli, 0))
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// Runs both parties of one session in this process.
fn local_session<R: Send>(
    ta: &TrustedAuthority,
    dev: &mut Device,
    timeout: Duration,
    op: impl FnOnce(&mut Device, &mut dyn Transport) -> std::result::Result<R, ProtocolError> + Send,
) -> Result<R> {
    let (mut a, mut b) = memory_pair(timeout);
    let (ta_result, dev_result) = thread::scope(|s| {
        let h = s.spawn(move || ta.serve(&mut a));
        let d = op(dev, &mut b);
        drop(b);
        (h.join().expect("TA thread"), d)
    });
    ta_result.map_err(protocol)?;
    dev_result.map_err(protocol)
}

fn ta(cli: &Cli, out: &Out, cmd: &TaCmd) -> Result<()> {
    match cmd {
        TaCmd::Serve {
            store,
            listen,
            sessions,
            k,
            t,
            timeout,
        } => {
            let ta = Arc::new(make_ta(cli, store, *k, *t)?);
            let listener = std::net::TcpListener::bind(listen)
                .map_err(|e| CliError::Protocol(format!("{listen}: {e}")))?;
            let addr = listener
                .local_addr()
                .map_err(|e| CliError::Protocol(e.to_string()))?;
            out.emit(
                format!("listening on {addr}"),
                &tagged("ta serve", json!({"listening": addr.to_string()})),
            );
            let json = out.is_json();
            ta.serve_tcp(
                listener,
                Duration::from_secs(*timeout),
                *sessions,
                move |r| {
                    let line = match r {
                        Ok(rep) if json => {
                            serde_json::to_string(&tagged("ta session", &rep)).unwrap()
                        }
                        Ok(rep) => format!(
                            "{} {} index {} cursor {}/{}",
                            rep.purpose,
                            rep.sn,
                            rep.index,
                            rep.cursor,
                            rep.cursor + rep.remaining
                        ),
                        Err(e) if json => {
                            json!({"command": "ta session", "error": e.to_string()}).to_string()
                        }
                        Err(e) => format!("session failed: {e}"),
                    };
                    println!("{line}");
                },
            )
            .map_err(|e| CliError::Protocol(e.to_string()))?;
        }
        TaCmd::Enroll { session, k, t } => {
            let ta = make_ta(cli, &session.store, *k, *t)?;
            let mut dev = load_device(cli, &session.device)?;
            local_session(
                &ta,
                &mut dev,
                Duration::from_secs(session.timeout),
                |d, tr| d.enroll(tr),
            )?;
            save_device(&dev, &session.device)?;
            out.emit(
                format!("enrolled {} with t = {t}, k = {k}", hex::encode(dev.sn())),
                &tagged(
                    "ta enroll",
                    json!({"sn": hex::encode(dev.sn()), "k": k, "t": t}),
                ),
            );
        }
        TaCmd::Identify { session } | TaCmd::Update { session } => {
            let update = matches!(cmd, TaCmd::Update { .. });
            let existing = open_store(&session.store)?;
            let dev_sn = load_device(cli, &session.device)?.sn().to_owned();
            let rec = existing
                .get(&dev_sn)
                .ok_or_else(|| CliError::Protocol("device is not enrolled in this store".into()))?;
            let (k, t) = (rec.k, rec.t());
            drop(existing);
            let ta = make_ta(cli, &session.store, k, t)?;
            let mut dev = load_device(cli, &session.device)?;
            let timeout = Duration::from_secs(session.timeout);
            let outcome = if update {
                local_session(&ta, &mut dev, timeout, |d, tr| d.update(tr))?
            } else {
                local_session(&ta, &mut dev, timeout, |d, tr| d.identify(tr))?
            };
            save_device(&dev, &session.device)?;
            let name = if update { "ta update" } else { "ta identify" };
            out.emit(
                format!(
                    "{} {}: epoch {} index {} device cursor {}",
                    name.trim_start_matches("ta "),
                    hex::encode(dev.sn()),
                    outcome.epoch,
                    outcome.index,
                    outcome.cursor
                ),
                &tagged(name, outcome),
            );
        }
    }
    Ok(())
}

fn device(cli: &Cli, out: &Out, cmd: &DeviceCmd) -> Result<()> {
    match cmd {
        DeviceCmd::Init {
            out: path,
            sn,
            force,
        } => {
            refuse_overwrite(path, *force)?;
            let catalog = verified_catalog(cli)?;
            let inst = genie_create(&catalog, entropy(cli)).map_err(data)?;
            save_device(&Device::new(*sn, inst), path)?;
            out.emit(
                format!("wrote device {} to {}", hex::encode(sn), path.display()),
                &tagged("device init", json!({"sn": hex::encode(sn), "path": path})),
            );
        }
        DeviceCmd::Run {
            device: path,
            connect,
            op,
            timeout,
        } => {
            let mut dev = load_device(cli, path)?;
            let mut tr = TcpTransport::connect(connect, Duration::from_secs(*timeout))
                .map_err(|e| CliError::Protocol(format!("{connect}: {e}")))?;
            let result = match op {
                Op::Enroll => dev.enroll(&mut tr).map(|_| None),
                Op::Identify => dev.identify(&mut tr).map(Some),
                Op::Update => dev.update(&mut tr).map(Some),
            };
            drop(tr);
            // The device's state may have moved even on failure paths that
            // rolled back, so the file always reflects the instance.
            save_device(&dev, path)?;
            let outcome = result.map_err(protocol)?;
            out.emit(
                format!("{op:?} ok: epoch {} cursor {}", dev.epoch(), dev.cursor()).to_lowercase(),
                &tagged("device run", json!({"op": format!("{op:?}").to_lowercase(), "outcome": outcome, "epoch": dev.epoch(), "cursor": dev.cursor()})),
            );
        }
    }
    Ok(())
}
