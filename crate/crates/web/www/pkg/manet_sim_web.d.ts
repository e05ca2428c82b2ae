/* tslint:disable */
/* eslint-disable */

/**
 * Average drain rate and predicted lifetime of a battery drawing `power_w`
 * from `start_s` onward, sampled with the protocol's estimator.
 */
export function drain_curve(initial_j: number, power_w: number, start_s: number, protocol_name: string, seconds: number): string;

export function scenario_names(): string;

export function scenario_text(name: string): string | undefined;

/**
 * Run one seed. An empty protocol uses the scenario's own.
 */
export function simulate(config: string, protocol_name: string, seed: bigint): string;

/**
 * Node positions, unit-disk links and session endpoints.
 */
export function topology(config: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly drain_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly scenario_names: () => [number, number];
    readonly scenario_text: (a: number, b: number) => [number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly topology: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
