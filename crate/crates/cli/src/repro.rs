//! `csiq repro`: trains and evaluates a preset grid and renders the tables.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{anyhow, Context, Result};
use csiq_core::report::{make_tables, Record, RunReport};
use csiq_core::training::{write_history, Cell, Preset};

use crate::manifest::Manifest;

/// Worker count: `CSIQ_THREADS` if set, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var("CSIQ_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .with_context(|| format!("CSIQ_THREADS must be a positive integer, got `{v}`"))?;
            anyhow::ensure!(n > 0, "CSIQ_THREADS must be positive");
            Ok(n)
        }
        Err(_) => Ok(thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn cell_name(c: &Cell) -> String {
    let bits = c.bits.map_or("nq".to_string(), |b| format!("b{b}"));
    format!("{}_cr{}_{bits}_s{}", c.method, c.cr, c.seed)
}

fn describe(preset: &Preset) -> String {
    let r = &preset.recipe;
    let ch = &preset.channel;
    let mut s = format!(
        "preset = {}\nchannel = {}x{} of {} sub-carriers, {} paths, {}\ndataset_seed = {}\nsplit = {:?}\nmethods = {}\ncrs = {:?}\nbits = {:?}\nseeds = {:?}\nstage2_epochs = {}\nstage2_lr_max = {}\n",
        preset.name,
        ch.rows,
        ch.antennas,
        ch.subcarriers,
        ch.num_paths,
        ch.scenario,
        preset.dataset_seed,
        preset.split,
        preset.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        preset.crs,
        preset.bits,
        preset.seeds,
        r.stage2_epochs,
        r.stage2_lr_max,
    );
    s.push_str(&r.base.to_text());
    s
}

struct CellOutput {
    record: Record,
    history: Vec<u8>,
}

pub fn run(preset: &Preset, out: &Path, workers: usize) -> Result<()> {
    let (ds, parts) = preset.dataset()?;
    let (train, val, test) = (&parts[0], &parts[1], &parts[2]);
    let mut manifest = Manifest::new("repro", describe(preset), preset.seeds.first().copied());

    let mut ds_bytes = Vec::new();
    ds.write_to(&mut ds_bytes)?;
    manifest.write(&out.join("dataset.csiq"), &ds_bytes)?;

    let cells = preset.cells();
    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<usize, Result<CellOutput>>> = Mutex::new(BTreeMap::new());
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let res = preset.run_cell::<f32>(cell, train, val, test).and_then(|(run, _, record)| {
                    let mut history = Vec::new();
                    write_history(&mut history, &run.stage1_history)?;
                    write_history(&mut history, &run.stage2_history)?;
                    Ok(CellOutput { record, history })
                });
                eprintln!("{} {}", cell_name(cell), if res.is_ok() { "done" } else { "failed" });
                results.lock().expect("no worker panicked").insert(i, res.map_err(anyhow::Error::from));
            });
        }
    });

    let mut records = Vec::with_capacity(cells.len());
    for (i, res) in results.into_inner().map_err(|_| anyhow!("a worker panicked"))? {
        let cell = &cells[i];
        let output = res.with_context(|| format!("cell {}", cell_name(cell)))?;
        manifest.write(&out.join("histories").join(format!("{}.jsonl", cell_name(cell))), &output.history)?;
        records.push(output.record);
    }
    let report = RunReport {
        dataset_fingerprint: ds.fingerprint(),
        seeds: preset.seeds.clone(),
        records,
    };
    let tables = make_tables(&report);
    manifest.write(&out.join("report.json"), report.to_json()?.as_bytes())?;
    manifest.write(&out.join("tables.txt"), tables.text.as_bytes())?;
    manifest.write(&out.join("tables.csv"), tables.csv.as_bytes())?;
    manifest.save(&out.join("manifest.json"))?;
    print!("{}", tables.text);
    Ok(())
}
