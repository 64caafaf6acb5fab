/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    base_rgba(): Uint8Array;
    final_rgba(): Uint8Array;
    gt_rgba(): Uint8Array;
    height(): number;
    image_rgba(): Uint8Array;
    /**
     * Gradient magnitude of the weighted loss with respect to each logit,
     * normalized to the largest value, as gray RGBA.
     */
    loss_grad_rgba(w_bce: number, w_iou: number, w_ssim: number): Uint8Array;
    /**
     * Structure loss of the base logits under the given term weights:
     * `[wbce, wiou, ssim, total]`.
     */
    losses(w_bce: number, w_iou: number, w_ssim: number): Float64Array;
    /**
     * Builds scene `seed` of `family` at `size`×`size`. `band_radius` sets
     * how far from the true boundary the base prediction is scrambled.
     */
    constructor(seed: number, size: number, family: string, band_radius: number);
    /**
     * Runs trimap, refiner and composite. Returns `[unknown fraction,
     * base MAE, final MAE, base Dice, final Dice]`; the maps are available
     * afterwards from [`Demo::trimap_rgba`] and [`Demo::final_rgba`].
     */
    run(t_low: number, t_high: number, policy: string): Float64Array;
    /**
     * The seven standard threshold pairs, narrowest band first, as a JSON
     * array of [`SweepRow`].
     */
    sweep(policy: string): string;
    trimap_rgba(): Uint8Array;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_base_rgba: (a: number) => [number, number];
    readonly demo_final_rgba: (a: number) => [number, number, number, number];
    readonly demo_gt_rgba: (a: number) => [number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_image_rgba: (a: number) => [number, number];
    readonly demo_loss_grad_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_losses: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_run: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_sweep: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_trimap_rgba: (a: number) => [number, number, number, number];
    readonly demo_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
